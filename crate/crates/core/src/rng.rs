//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, stream, index)`, so a draw never
//! depends on how many other draws were made before it or on which thread
//! asked for it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Named sub-streams so unrelated consumers of one seed never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Reference = 1,
    Diffusion = 2,
    Stiefel = 3,
    Split = 4,
    Target = 5,
    Validation = 6,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, purpose: Purpose, label: u64) -> u64 {
    mix(mix(seed ^ mix(purpose as u64)) ^ mix(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator dedicated to one point / one counter value.
pub fn point_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

pub fn standard_normals(seed: u64, counter: u64, dim: usize) -> Vec<f64> {
    let mut rng = point_rng(seed, counter);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform draws on the open interval (0, 1).
pub fn open_uniforms(seed: u64, counter: u64, dim: usize) -> Vec<f64> {
    let mut rng = point_rng(seed, counter);
    (0..dim)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        })
        .collect()
}
