//! Legendre polynomials and their measure-orthonormal scaling.

/// Writes `P_0(x), …, P_n(x)` into `out[..=n]` by the three-term recurrence.
pub fn legendre_into(n: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n == 0 {
        return;
    }
    out[1] = x;
    for k in 1..n {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// `√(2k+1)·P_k(x)` for `k = 0..=n`, orthonormal under the uniform
/// probability measure on `[-1, 1]`.
pub fn normalized_legendre_into(n: usize, x: f64, out: &mut [f64]) {
    legendre_into(n, x, out);
    for (k, v) in out.iter_mut().take(n + 1).enumerate() {
        *v *= ((2 * k + 1) as f64).sqrt();
    }
}

pub fn normalized_legendre(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    normalized_legendre_into(n, x, &mut out);
    out
}

/// Coefficients of a univariate polynomial in the normalized Legendre basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreSeries {
    pub coefficients: Vec<f64>,
}

impl LegendreSeries {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.coefficients.is_empty() {
            return 0.0;
        }
        let l = normalized_legendre(self.degree(), x);
        l.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recurrence_matches_closed_forms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut buf = [0.0; 4];
        for _ in 0..100 {
            let x: f64 = rng.random_range(-1.0..1.0);
            legendre_into(3, x, &mut buf);
            assert!((buf[2] - (3.0 * x * x - 1.0) / 2.0).abs() < 1e-14);
            assert!((buf[3] - (5.0 * x * x * x - 3.0 * x) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degree_one_normalization() {
        let l = normalized_legendre(1, 0.5);
        assert!((l[1] - 3f64.sqrt() * 0.5).abs() < 1e-15);
    }
}
