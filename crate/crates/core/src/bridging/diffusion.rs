use rayon::prelude::*;

use super::schedule::{BridgingSchedule, Generator, ScheduleKind};
use crate::basis::GaussLegendre;
use crate::divergence::{divergence_quadrature, DensityFn, Grid};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, pairwise_sum};
use crate::rng::{derive_seed, standard_normals, Purpose};

/// Samples evolved by the Ornstein–Uhlenbeck kernel, `K` noise draws per
/// base point.
///
/// Rows are stored draw-major: row `k·N + i` is draw `k` of base point `i`,
/// so a dataset with fewer draws is a prefix of one with more.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusedDataset {
    pub t: f64,
    pub enrichment: usize,
    pub seed: u64,
    pub base_len: usize,
    pub samples: Vec<Vec<f64>>,
}

impl DiffusedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn noise_counter(i: usize, k: usize) -> u64 {
    ((k as u64) << 32) | i as u64
}

/// `X^{(i,k)} = e^{-t} X^{(i)} + √(1 − e^{-2t}) Z^{(i,k)}`.
pub fn diffuse_samples(x: &[Vec<f64>], t: f64, k: usize, seed: u64) -> Result<DiffusedDataset> {
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("diffusion time must be nonnegative, got {t}")));
    }
    if k == 0 {
        return Err(Error::Argument("enrichment factor must be at least 1".into()));
    }
    let n = x.len();
    if n as u64 >= 1 << 32 {
        return Err(Error::SizeLimit { size: n, cap: u32::MAX as usize });
    }
    let decay = (-t).exp();
    let noise = (-(-2.0 * t).exp_m1()).sqrt();
    let stream = derive_seed(seed, Purpose::Diffusion, 0);
    let samples = (0..n * k)
        .into_par_iter()
        .map(|row| {
            let (kk, i) = (row / n, row % n);
            let base = &x[i];
            if noise == 0.0 {
                return base.clone();
            }
            let z = standard_normals(stream, noise_counter(i, kk), base.len());
            base.iter().zip(&z).map(|(v, z)| decay * v + noise * z).collect()
        })
        .collect();
    Ok(DiffusedDataset {
        t,
        enrichment: k,
        seed,
        base_len: n,
        samples,
    })
}

/// One-dimensional density family `π_t` under the Ornstein–Uhlenbeck flow,
/// with access to the first two derivatives of `log π_t`.
pub trait DiffusedDensity: Sync {
    fn log_pdf(&self, x: f64, t: f64) -> f64;
    fn score(&self, x: f64, t: f64) -> f64;
    fn score_derivative(&self, x: f64, t: f64) -> f64;
    /// Interval carrying all but a negligible part of the mass of `π_t`.
    fn support(&self, t: f64) -> (f64, f64);
}

/// `Σ w_k N(μ_k, σ_k²)`; each component diffuses to
/// `N(e^{-t}μ_k, 1 + e^{-2t}(σ_k² − 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture1d {
    components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture1d {
    /// Components as `(weight, mean, variance)`; weights are normalized.
    pub fn new(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Argument("mixture needs a component".into()));
        }
        if components.iter().any(|(w, m, v)| !(*w > 0.0) || !m.is_finite() || !(*v > 0.0)) {
            return Err(Error::Argument("weights and variances must be positive".into()));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        Ok(Self {
            components: components.into_iter().map(|(w, m, v)| (w / total, m, v)).collect(),
        })
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![(1.0, mean, var)])
    }

    fn at(&self, t: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let decay = (-t).exp();
        self.components
            .iter()
            .map(move |&(w, m, v)| (w, decay * m, 1.0 + decay * decay * (v - 1.0)))
    }

    /// Component log-weights `ln(w_k N(x; m_k, s_k²))` at time `t`.
    fn log_terms(&self, x: f64, t: f64) -> Vec<(f64, f64, f64)> {
        self.at(t)
            .map(|(w, m, s2)| {
                let l = w.ln() - 0.5 * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * (x - m).powi(2) / s2;
                (l, m, s2)
            })
            .collect()
    }

    /// Normalized bridge `π_t` as a density function (`t = ∞` gives `N(0,1)`).
    pub fn bridge(&self, t: f64) -> DensityFn {
        let me = self.clone();
        DensityFn::new(move |x: &[f64]| me.log_pdf(x[0], t)).with_normalizer(1.0)
    }
}

impl DiffusedDensity for GaussianMixture1d {
    fn log_pdf(&self, x: f64, t: f64) -> f64 {
        let terms: Vec<f64> = self.log_terms(x, t).iter().map(|c| c.0).collect();
        log_sum_exp(&terms)
    }

    fn score(&self, x: f64, t: f64) -> f64 {
        let terms = self.log_terms(x, t);
        let lse = log_sum_exp(&terms.iter().map(|c| c.0).collect::<Vec<_>>());
        terms
            .iter()
            .map(|(l, m, s2)| (l - lse).exp() * (-(x - m) / s2))
            .sum()
    }

    fn score_derivative(&self, x: f64, t: f64) -> f64 {
        let terms = self.log_terms(x, t);
        let lse = log_sum_exp(&terms.iter().map(|c| c.0).collect::<Vec<_>>());
        let (mut first, mut second) = (0.0, 0.0);
        for (l, m, s2) in &terms {
            let r = (l - lse).exp();
            let g = -(x - m) / s2;
            first += r * g;
            second += r * (g * g - 1.0 / s2);
        }
        second - first * first
    }

    fn support(&self, t: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, m, s2) in self.at(t) {
            let s = s2.sqrt();
            lo = lo.min(m - 10.0 * s);
            hi = hi.max(m + 10.0 * s);
        }
        (lo, hi)
    }
}

/// Nodes of the trapezoid rule used for `D(t)`.
const RATE_NODES: usize = 2049;

/// `D(t) = ‖∂_t log π_t‖_{L²(π_t)}` written with the score of `π_t` and of
/// the stationary `N(0, 1)`.
pub fn diffusion_rate_d<T: DiffusedDensity + ?Sized>(target: &T, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("diffusion time must be nonnegative, got {t}")));
    }
    let (lo, hi) = target.support(t);
    let grid = Grid::line(lo, hi, RATE_NODES)?;
    let v = grid.integrate(|x| {
        let x = x[0];
        let s = target.score(x, t);
        let h = target.score_derivative(x, t);
        let integrand = s * (s + x) + h + 1.0;
        integrand * integrand * target.log_pdf(x, t).exp()
    })?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("rate integral is {v} at t = {t}")));
    }
    Ok(v.max(0.0).sqrt())
}

/// Diffusion schedule from `t'(u) = −Ω / D(t(u))`, `t(0) = ∞`, `t(1) = 0`.
///
/// Equivalently `u(t) = 1 − (1/Ω)∫₀ᵗ D`, with `Ω = ∫₀^∞ D`; the integral is
/// accumulated by Gauss–Legendre on `[0, horizon]` and inverted by bisection.
pub fn diffusion_schedule_ode<F>(rate: F, l: usize, horizon: f64) -> Result<(BridgingSchedule, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if l == 0 {
        return Err(Error::Schedule("at least one bridge is required".into()));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Schedule(format!("invalid horizon {horizon}")));
    }
    const CELLS: usize = 400;
    let gl = GaussLegendre::new(8);
    let h = horizon / CELLS as f64;
    let cell_integral = |a: f64, b: f64| -> Result<f64> {
        let (x, w) = gl.scaled(a, b);
        let mut s = Vec::with_capacity(x.len());
        for (xi, wi) in x.iter().zip(&w) {
            s.push(wi * rate(*xi)?);
        }
        Ok(pairwise_sum(&s))
    };
    let cells = (0..CELLS)
        .into_par_iter()
        .map(|c| cell_integral(c as f64 * h, (c + 1) as f64 * h))
        .collect::<Result<Vec<f64>>>()?;
    let mut cumulative = vec![0.0; CELLS + 1];
    for c in 0..CELLS {
        cumulative[c + 1] = cumulative[c] + cells[c];
    }
    let omega = cumulative[CELLS];
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Schedule(format!("total rate {omega} is not positive")));
    }
    let mut times = Vec::with_capacity(l);
    for k in 1..=l {
        if k == l {
            times.push(0.0);
            continue;
        }
        let level = omega * (1.0 - k as f64 / l as f64);
        let c = cumulative.partition_point(|v| *v < level).clamp(1, CELLS) - 1;
        let (mut lo, mut hi) = (c as f64 * h, (c + 1) as f64 * h);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cumulative[c] + cell_integral(c as f64 * h, mid)? < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        times.push(0.5 * (lo + hi));
    }
    let schedule = BridgingSchedule::new(ScheduleKind::Diffusion, times, Generator::DiffusionOde { omega })?;
    Ok((schedule, omega))
}

/// Per-step divergences of a bridge sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EquidivergenceReport {
    /// `D_α(π^{(ℓ)} ‖ π^{(ℓ−1)})` for `ℓ = 1..L`.
    pub divergences: Vec<f64>,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// `max · L²`.
    pub scaled_max: f64,
}

impl EquidivergenceReport {
    /// `max / min`, infinite when some step has zero divergence.
    pub fn spread(&self) -> f64 {
        if self.min > 0.0 {
            self.max / self.min
        } else if self.max == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }
}

/// Divergences between consecutive bridges, starting from `initial`.
pub fn equidivergence_diagnostic(
    initial: &DensityFn,
    bridges: &[DensityFn],
    alpha: f64,
    grid: &Grid,
) -> Result<EquidivergenceReport> {
    if bridges.is_empty() {
        return Err(Error::Argument("no bridges given".into()));
    }
    let mut chain = Vec::with_capacity(bridges.len() + 1);
    chain.push(initial);
    chain.extend(bridges.iter());
    let divergences = chain
        .par_windows(2)
        .map(|w| divergence_quadrature(w[1], w[0], alpha, grid))
        .collect::<Result<Vec<f64>>>()?;
    let max = divergences.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = divergences.iter().cloned().fold(f64::INFINITY, f64::min);
    let l = divergences.len() as f64;
    Ok(EquidivergenceReport {
        mean: pairwise_sum(&divergences) / l,
        scaled_max: max * l * l,
        max,
        min,
        divergences,
    })
}
