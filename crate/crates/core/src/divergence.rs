//! α-divergence generators, quadrature divergences and sample objectives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{pairwise_mean, pairwise_sum};

/// Density values below this are treated as exact zeros.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Which member of the α family, and whether the normalized generator is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceSpec {
    pub alpha: f64,
    pub normalized: bool,
}

impl DivergenceSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Argument(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self {
            alpha,
            normalized: false,
        })
    }

    pub fn normalized(alpha: f64) -> Result<Self> {
        Ok(Self {
            normalized: true,
            ..Self::new(alpha)?
        })
    }

    pub fn generator(&self, t: f64) -> Result<f64> {
        if self.normalized {
            phi_alpha_normalized(t, self.alpha)
        } else {
            phi_alpha(t, self.alpha)
        }
    }
}

/// A possibly unnormalized log-density with an optional known normalizer.
#[derive(Clone)]
pub struct DensityFn {
    log_density: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    normalizer: Option<f64>,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("normalizer", &self.normalizer)
            .finish_non_exhaustive()
    }
}

impl DensityFn {
    pub fn new<F>(log_density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            log_density: Arc::new(log_density),
            normalizer: None,
        }
    }

    pub fn with_normalizer(mut self, z: f64) -> Self {
        self.normalizer = Some(z);
        self
    }

    /// `scale · N(mean, var)` in one dimension.
    pub fn gaussian(mean: f64, var: f64, scale: f64) -> Self {
        let c = scale.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        Self::new(move |x: &[f64]| c - 0.5 * (x[0] - mean).powi(2) / var).with_normalizer(scale)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn normalizer(&self) -> Option<f64> {
        self.normalizer
    }
}

fn check_t(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Argument(format!("generator argument must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Unnormalized generator `φ_α`, convex with `φ_α(1) = φ_α'(1) = 0`.
///
/// Returns `+∞` where the generator is singular at zero.
pub fn phi_alpha(t: f64, alpha: f64) -> Result<f64> {
    check_t(t)?;
    if alpha == 1.0 {
        if t == 0.0 {
            return Ok(1.0);
        }
        Ok(t * t.ln() - t + 1.0)
    } else if alpha == 0.0 {
        if t == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(-t.ln() + t - 1.0)
    } else {
        if t == 0.0 && alpha < 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((t.powf(alpha) - 1.0) / (alpha * (alpha - 1.0)) - (t - 1.0) / (alpha - 1.0))
    }
}

/// Generator for normalized densities: `φ_α` without its affine part.
pub fn phi_alpha_normalized(t: f64, alpha: f64) -> Result<f64> {
    check_t(t)?;
    if alpha == 1.0 {
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(t * t.ln())
    } else if alpha == 0.0 {
        if t == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(-t.ln())
    } else {
        if t == 0.0 && alpha < 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((t.powf(alpha) - 1.0) / (alpha * (alpha - 1.0)))
    }
}

/// `φ_α(f/g)·g` from log-values, valid when either density vanishes.
pub fn divergence_integrand(log_f: f64, log_g: f64, alpha: f64, normalized: bool) -> f64 {
    let f = log_f.exp();
    let g = log_g.exp();
    let affine = if normalized { 0.0 } else { 1.0 };
    if alpha == 1.0 {
        let cross = if f == 0.0 { 0.0 } else { f * (log_f - log_g) };
        cross + affine * (g - f)
    } else if alpha == 0.0 {
        let cross = if g == 0.0 { 0.0 } else { g * (log_g - log_f) };
        cross + affine * (f - g)
    } else {
        let mixed = if f == 0.0 && alpha > 0.0 || g == 0.0 && alpha < 1.0 {
            0.0
        } else {
            (alpha * log_f + (1.0 - alpha) * log_g).exp()
        };
        (mixed - g) / (alpha * (alpha - 1.0)) - affine * (f - g) / (alpha - 1.0)
    }
}

/// Tensor grid with equispaced nodes on each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<(f64, f64, usize)>,
}

impl Grid {
    pub fn new(axes: Vec<(f64, f64, usize)>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Argument("grids are one- or two-dimensional".into()));
        }
        for &(lo, hi, n) in &axes {
            if !(lo < hi) || n < 2 {
                return Err(Error::Interval { a: lo, b: hi });
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![(lo, hi, n)])
    }

    /// `[center - 8·scale, center + 8·scale]` with 2048 nodes.
    pub fn gaussian_box(center: f64, scale: f64) -> Self {
        Self {
            axes: vec![(center - 8.0 * scale, center + 8.0 * scale, 2048)],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn nodes(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi, n) = self.axes[k];
        let h = (hi - lo) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let mut w = vec![h; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        (x, w)
    }

    /// Trapezoid-rule integral of `f`. Returns an error naming the first
    /// node where `f` is not finite.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<f64> {
        let (x0, w0) = self.nodes(0);
        let mut terms = Vec::new();
        let mut push = |p: &[f64], w: f64, terms: &mut Vec<f64>| -> Result<()> {
            let v = f(p);
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite integrand {v} at {p:?}")));
            }
            terms.push(v * w);
            Ok(())
        };
        if self.dim() == 1 {
            terms.reserve(x0.len());
            for (x, w) in x0.iter().zip(&w0) {
                push(&[*x], *w, &mut terms)?;
            }
        } else {
            let (x1, w1) = self.nodes(1);
            terms.reserve(x0.len() * x1.len());
            for (a, wa) in x0.iter().zip(&w0) {
                for (b, wb) in x1.iter().zip(&w1) {
                    push(&[*a, *b], wa * wb, &mut terms)?;
                }
            }
        }
        Ok(pairwise_sum(&terms))
    }
}

/// `∫ φ_α(f/g)·g` on a grid.
pub fn divergence_quadrature(f: &DensityFn, g: &DensityFn, alpha: f64, grid: &Grid) -> Result<f64> {
    divergence_quadrature_spec(f, g, DivergenceSpec::new(alpha)?, grid)
}

pub fn divergence_quadrature_spec(
    f: &DensityFn,
    g: &DensityFn,
    spec: DivergenceSpec,
    grid: &Grid,
) -> Result<f64> {
    grid.integrate(|x| {
        divergence_integrand(f.log_density(x), g.log_density(x), spec.alpha, spec.normalized)
    })
}

/// Normalizer of `f`: its declared value or a grid integral.
pub fn normalizing_constant(f: &DensityFn, grid: &Grid) -> Result<f64> {
    match f.normalizer() {
        Some(z) => Ok(z),
        None => grid.integrate(|x| f.density(x)),
    }
}

/// Residual of the decomposition of an unnormalized divergence into the
/// normalized divergence and a mass mismatch term.
pub fn normalized_decomposition_check(
    f: &DensityFn,
    g: &DensityFn,
    alpha: f64,
    grid: &Grid,
) -> Result<f64> {
    let zf = grid.integrate(|x| f.density(x))?;
    let zg = grid.integrate(|x| g.density(x))?;
    let full = divergence_quadrature(f, g, alpha, grid)?;
    let (lzf, lzg) = (zf.ln(), zg.ln());
    let normalized = grid.integrate(|x| {
        divergence_integrand(f.log_density(x) - lzf, g.log_density(x) - lzg, alpha, true)
    })?;
    let coefficient = (alpha * lzf - (alpha - 1.0) * lzg).exp();
    let predicted = coefficient * normalized + zg * phi_alpha(zf / zg, alpha)?;
    Ok((full - predicted).abs())
}

/// Monte-Carlo estimate together with the number of clamped `g` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub clamped: usize,
}

/// `(1/N) Σ φ_α(f_i/g_i)·g_i/ρ_i` over reference-distributed points.
pub fn divergence_mc(f_vals: &[f64], g_vals: &[f64], ref_vals: &[f64], alpha: f64) -> Result<f64> {
    Ok(divergence_mc_counted(f_vals, g_vals, ref_vals, alpha)?.value)
}

pub fn divergence_mc_counted(
    f_vals: &[f64],
    g_vals: &[f64],
    ref_vals: &[f64],
    alpha: f64,
) -> Result<McEstimate> {
    let n = f_vals.len();
    if g_vals.len() != n || ref_vals.len() != n || n == 0 {
        return Err(Error::Argument("value arrays must be nonempty and equal in length".into()));
    }
    let mut clamped = 0;
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let (f, mut g, r) = (f_vals[i], g_vals[i], ref_vals[i]);
        if f < 0.0 || g < 0.0 || !(r > 0.0) {
            return Err(Error::Argument(format!("invalid values at index {i}")));
        }
        if g < DENSITY_FLOOR {
            g = DENSITY_FLOOR;
            clamped += 1;
        }
        let f = if f < DENSITY_FLOOR { 0.0 } else { f };
        terms.push(phi_alpha(f / g, alpha)? * g / r);
    }
    Ok(McEstimate {
        value: pairwise_mean(&terms),
        clamped,
    })
}

/// `-(1/N) Σ ln g(X_i) + ∫g`.
pub fn kl_data_objective(log_g_vals: &[f64], integral_of_g: f64) -> Result<f64> {
    if log_g_vals.is_empty() {
        return Err(Error::Argument("no data points".into()));
    }
    if !(integral_of_g >= 0.0) || !integral_of_g.is_finite() {
        return Err(Error::Argument(format!("invalid integral {integral_of_g}")));
    }
    if log_g_vals.contains(&f64::NEG_INFINITY) {
        return Ok(f64::INFINITY);
    }
    Ok(-pairwise_mean(log_g_vals) + integral_of_g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_examples() {
        for a in [0.0, 0.5, 1.0, 2.0] {
            assert_eq!(phi_alpha(1.0, a).unwrap(), 0.0);
        }
        assert!((phi_alpha(3.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((phi_alpha(2.0, 0.0).unwrap() - 0.306_852_819_440_054_7).abs() < 1e-15);
        assert_eq!(phi_alpha(0.0, -1.0).unwrap(), f64::INFINITY);
        assert_eq!(phi_alpha(0.0, 0.0).unwrap(), f64::INFINITY);
        assert!(phi_alpha(-1.0, 2.0).is_err());
    }

    #[test]
    fn mc_examples() {
        assert_eq!(divergence_mc(&[2.0], &[1.0], &[1.0], 2.0).unwrap(), 0.5);
        let v = [0.3, 1.2, 0.7];
        assert_eq!(divergence_mc(&v, &v, &[1.0; 3], 0.3).unwrap(), 0.0);
        let est = divergence_mc_counted(&[1.0], &[0.0], &[1.0], 2.0).unwrap();
        assert_eq!(est.clamped, 1);
    }

    #[test]
    fn kl_objective_examples() {
        let v = kl_data_objective(&[0.0, 1.0], 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(
            kl_data_objective(&[f64::NEG_INFINITY], 1.0).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn integrand_matches_generator() {
        for alpha in [-1.0, 0.0, 0.3, 0.5, 1.0, 2.0] {
            for (f, g) in [(0.3, 1.7), (2.0, 0.5), (1.0, 1.0)] {
                let direct = phi_alpha(f / g, alpha).unwrap() * g;
                let via_logs = divergence_integrand(f64::ln(f), f64::ln(g), alpha, false);
                assert!((direct - via_logs).abs() < 1e-13, "{alpha} {f} {g}");
            }
        }
    }

    #[test]
    fn non_finite_integrands_are_located() {
        let f = DensityFn::new(|x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        let g = DensityFn::gaussian(0.0, 1.0, 1.0);
        let err = divergence_quadrature(&f, &g, 2.0, &Grid::line(-1.0, 1.0, 11).unwrap());
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
