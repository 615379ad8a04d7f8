//! Gauss–Legendre rules.

use std::f64::consts::PI;

use super::legendre::LegendreSeries;
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f(u) du`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn scaled(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        (
            self.nodes.iter().map(|x| mid + half * x).collect(),
            self.weights.iter().map(|w| w * half).collect(),
        )
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `∫_a^b p(u) du` for a polynomial `p` given in the normalized Legendre
/// basis, using a `q`-point Gauss–Legendre rule.
pub fn partial_integral(poly: &LegendreSeries, a: f64, b: f64, q: usize) -> Result<f64> {
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Interval { a, b });
    }
    if q == 0 {
        return Err(Error::Argument("quadrature order must be positive".into()));
    }
    Ok(GaussLegendre::new(q).integrate(a, b, |u| poly.eval(u)))
}

/// Tensor-product Gauss–Legendre rule on `[-1, 1]^d`.
pub fn tensor_rule(d: usize, q: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let gl = GaussLegendre::new(q);
    let mut points = vec![vec![]];
    let mut weights = vec![1.0];
    for _ in 0..d {
        let mut np = Vec::with_capacity(points.len() * q);
        let mut nw = Vec::with_capacity(points.len() * q);
        for (p, w) in points.iter().zip(&weights) {
            for (x, v) in gl.nodes.iter().zip(&gl.weights) {
                let mut pp = p.clone();
                pp.push(*x);
                np.push(pp);
                nw.push(w * v);
            }
        }
        points = np;
        weights = nw;
    }
    (points, weights)
}
