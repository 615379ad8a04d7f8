#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Sequential measure transport built from sum-of-squares densities.
//!
//! The crate fits nonnegative polynomial densities by convex α-divergence
//! minimization, turns them into exact Knothe–Rosenblatt maps, and composes
//! those maps along tempering or diffusion bridges.

pub mod basis;
pub mod bridging;
pub mod divergence;
pub mod error;
pub mod fit;
pub mod model_io;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod sos;
pub mod targets;
pub mod transport;

pub use error::{Error, Result};
