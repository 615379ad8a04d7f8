#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtransport::basis::{FeatureBasis, ReferenceMeasure, tensor_rule};
use seqtransport::sos::SosDensity;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_psd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}

/// Random normalized SoS density; a low-rank part keeps it away from uniform.
pub fn random_density(reference: ReferenceMeasure, p: u32, rng: &mut ChaCha8Rng) -> SosDensity {
    let basis = FeatureBasis::total_degree(reference, p).unwrap();
    let m = basis.len();
    let v = DMatrix::from_fn(m, 1, |_, _| rng.random_range(-1.0..1.0));
    let a = random_psd(m, rng) * 0.1 + &v * v.transpose() + DMatrix::identity(m, m) * 0.05;
    SosDensity::normalized(basis, a).unwrap()
}

pub fn random_interior(d: usize, rng: &mut ChaCha8Rng, half_width: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-half_width..half_width)).collect()
}

/// Gauss–Legendre tensor quadrature of `f` over `[-1, 1]^d`.
pub fn cube_quadrature<F: Fn(&[f64]) -> f64>(d: usize, q: usize, f: F) -> f64 {
    let (pts, w) = tensor_rule(d, q);
    pts.iter().zip(&w).map(|(p, wt)| wt * f(p)).sum()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}
