//! Built-in target densities: a diagonal Gaussian mixture, a banana-warped
//! Gaussian and the SIR epidemic posterior.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::rng::{derive_seed, point_rng, standard_normals, Purpose};

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl DiagonalMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || means.len() != variances.len() {
            return Err(Error::Argument("one weight, mean and variance per component".into()));
        }
        let d = means[0].len();
        if d == 0
            || means.iter().any(|m| m.len() != d)
            || variances.iter().any(|v| v.len() != d || v.iter().any(|s| !(*s > 0.0)))
        {
            return Err(Error::Argument("component shapes or variances are invalid".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Argument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            variances,
        })
    }

    /// `½N((2,2), diag(0.1,0.5)) + ½N((−2,−2), diag(0.5,0.1))`.
    pub fn bimodal() -> Self {
        Self::new(
            vec![0.5, 0.5],
            vec![vec![2.0, 2.0], vec![-2.0, -2.0]],
            vec![vec![0.1, 0.5], vec![0.5, 0.1]],
        )
        .expect("valid mixture")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_pdf(&self, k: usize, x: &[f64]) -> f64 {
        let mut l = self.weights[k].ln();
        for ((xi, m), v) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
            l -= 0.5 * ((2.0 * PI * v).ln() + (xi - m).powi(2) / v);
        }
        l
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.components()).map(|k| self.component_log_pdf(k, x)).collect();
        log_sum_exp(&terms)
    }

    /// Draws with their component labels.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
        let s = derive_seed(seed, Purpose::Target, 0);
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = point_rng(s, i);
                let u: f64 = rng.random();
                let mut k = 0;
                let mut acc = self.weights[0];
                while u >= acc && k + 1 < self.components() {
                    k += 1;
                    acc += self.weights[k];
                }
                let z = standard_normals(derive_seed(s, Purpose::Target, 1), i, self.dim());
                let x = z
                    .iter()
                    .zip(&self.means[k])
                    .zip(&self.variances[k])
                    .map(|((z, m), v)| m + v.sqrt() * z)
                    .collect();
                (k, x)
            })
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_labeled(n, seed).into_iter().map(|(_, x)| x).collect()
    }
}

/// `x₁ ~ N(0, 1)`, `x₂ | x₁ ~ N(b(x₁² − 1), σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Banana {
    pub warp: f64,
    pub sigma: f64,
}

impl Default for Banana {
    /// Illustrative values; nothing downstream depends on them.
    fn default() -> Self {
        Self {
            warp: 1.0,
            sigma: 0.5,
        }
    }
}

impl Banana {
    pub fn new(warp: f64, sigma: f64) -> Result<Self> {
        if !warp.is_finite() || !(sigma > 0.0) {
            return Err(Error::Argument("banana needs a finite warp and positive sigma".into()));
        }
        Ok(Self { warp, sigma })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let r = x[1] - self.warp * (x[0] * x[0] - 1.0);
        -0.5 * x[0] * x[0] - 0.5 * (r / self.sigma).powi(2) - (2.0 * PI * self.sigma).ln()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let s = derive_seed(seed, Purpose::Target, 2);
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let z = standard_normals(s, i, 2);
                vec![z[0], self.warp * (z[0] * z[0] - 1.0) + self.sigma * z[1]]
            })
            .collect()
    }
}

/// Settings of the SIR calibration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SirConfig {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
    pub horizon: f64,
    pub observations: usize,
    /// Largest RK4 step; each observation interval is split evenly.
    pub max_step: f64,
    /// Bound on `h·(β N + γ)`, the step relative to the fastest rate.
    pub max_rate_step: f64,
    pub noise_sd: f64,
    pub prior_lo: f64,
    pub prior_hi: f64,
    /// Parameters `(γ, β)` used to synthesize observations.
    pub truth: (f64, f64),
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            s0: 99.0,
            i0: 1.0,
            r0: 0.0,
            horizon: 5.0,
            observations: 6,
            max_step: 1e-3,
            max_rate_step: 0.02,
            noise_sd: 1.0,
            prior_lo: 0.0,
            prior_hi: 2.0,
            truth: (1.0, 0.1),
        }
    }
}

/// States `(S, I, R)` at the observation times `t_j = j·T/n`, `j = 1..n`.
pub fn sir_trajectory(config: &SirConfig, gamma: f64, beta: f64) -> Vec<[f64; 3]> {
    let n = config.observations;
    let interval = config.horizon / n as f64;
    let population = config.s0 + config.i0 + config.r0;
    let rate = beta.abs() * population + gamma.abs();
    let h_max = if rate > 0.0 {
        config.max_step.min(config.max_rate_step / rate)
    } else {
        config.max_step
    };
    let steps = (interval / h_max).ceil().max(1.0) as usize;
    let h = interval / steps as f64;
    let rhs = |y: [f64; 3]| -> [f64; 3] {
        let infection = beta * y[0] * y[1];
        let recovery = gamma * y[1];
        [-infection, infection - recovery, recovery]
    };
    let axpy = |y: [f64; 3], a: f64, k: [f64; 3]| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
    let mut y = [config.s0, config.i0, config.r0];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..steps {
            let k1 = rhs(y);
            let k2 = rhs(axpy(y, 0.5 * h, k1));
            let k3 = rhs(axpy(y, 0.5 * h, k2));
            let k4 = rhs(axpy(y, h, k3));
            for c in 0..3 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        out.push(y);
    }
    out
}

/// Unnormalized posterior over `(γ, β)` with a uniform prior box and
/// Gaussian observation noise on `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirPosterior {
    config: SirConfig,
    data: Vec<f64>,
}

impl SirPosterior {
    pub fn new(config: SirConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != config.observations {
            return Err(Error::Argument(format!(
                "expected {} observations, got {}",
                config.observations,
                data.len()
            )));
        }
        if !(config.noise_sd > 0.0)
            || !(config.prior_hi > config.prior_lo)
            || !(config.max_step > 0.0)
            || !(config.max_rate_step > 0.0)
        {
            return Err(Error::Argument("invalid SIR configuration".into()));
        }
        Ok(Self { config, data })
    }

    /// Observations `y_j = I(t_j) + ε_j` at the configured true parameters.
    pub fn synthetic(config: SirConfig, seed: u64) -> Result<Self> {
        let (gamma, beta) = config.truth;
        let traj = sir_trajectory(&config, gamma, beta);
        let eps = standard_normals(derive_seed(seed, Purpose::Target, 3), 0, config.observations);
        let data = traj
            .iter()
            .zip(&eps)
            .map(|(y, e)| y[1] + config.noise_sd * e)
            .collect();
        Self::new(config, data)
    }

    pub fn config(&self) -> &SirConfig {
        &self.config
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn log_likelihood(&self, gamma: f64, beta: f64) -> f64 {
        let traj = sir_trajectory(&self.config, gamma, beta);
        let mut ss = 0.0;
        for (y, obs) in traj.iter().zip(&self.data) {
            if !y[1].is_finite() {
                return f64::NEG_INFINITY;
            }
            ss += (y[1] - obs).powi(2);
        }
        -0.5 * ss / (self.config.noise_sd * self.config.noise_sd)
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        let (lo, hi) = (self.config.prior_lo, self.config.prior_hi);
        if theta.iter().all(|v| *v >= lo && *v <= hi) {
            -2.0 * (hi - lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `ln ℒ(θ) + ln π₀(θ)` for `θ = (γ, β)`.
    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        let prior = self.log_prior(theta);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        prior + self.log_likelihood(theta[0], theta[1])
    }

    /// Affine image of `[-1, 1]²` onto the prior box.
    pub fn from_cube(&self, x: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.config.prior_lo, self.config.prior_hi);
        x.iter().map(|v| lo + 0.5 * (hi - lo) * (v + 1.0)).collect()
    }

    /// `(log-likelihood, log-prior)` in cube coordinates, including the
    /// Jacobian of the affine change of variables in the prior term.
    pub fn cube_parts(&self, x: &[f64]) -> (f64, f64) {
        let theta = self.from_cube(x);
        let half = 0.5 * (self.config.prior_hi - self.config.prior_lo);
        let prior = self.log_prior(&theta);
        if prior == f64::NEG_INFINITY {
            return (0.0, prior);
        }
        (self.log_likelihood(theta[0], theta[1]), prior + 2.0 * half.ln())
    }
}

/// Named target with its parameters and an exact sampler when available.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinTarget {
    Bimodal(DiagonalMixture),
    Banana(Banana),
    Sir(SirPosterior),
}

impl BuiltinTarget {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinTarget::Bimodal(_) => "bimodal",
            BuiltinTarget::Banana(_) => "banana",
            BuiltinTarget::Sir(_) => "sir",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BuiltinTarget::Bimodal(m) => m.dim(),
            BuiltinTarget::Banana(_) | BuiltinTarget::Sir(_) => 2,
        }
    }

    /// Unnormalized log-density in the target's natural coordinates.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            BuiltinTarget::Bimodal(m) => m.log_density(x),
            BuiltinTarget::Banana(b) => b.log_density(x),
            BuiltinTarget::Sir(s) => s.log_posterior(x),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Option<Vec<Vec<f64>>> {
        match self {
            BuiltinTarget::Bimodal(m) => Some(m.sample(n, seed)),
            BuiltinTarget::Banana(b) => Some(b.sample(n, seed)),
            BuiltinTarget::Sir(_) => None,
        }
    }
}

fn take(params: &mut BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.remove(key).unwrap_or(default)
}

/// Accepted parameter keys for each built-in target.
pub fn builtin_target_keys(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "bimodal" => Some(&[]),
        "banana" => Some(&["warp", "sigma"]),
        "sir" => Some(&["s0", "i0", "r0", "noise", "gamma_true", "beta_true", "data_seed", "max_step"]),
        _ => None,
    }
}

/// Target by name; unknown names and unknown parameter keys are errors.
pub fn builtin_target(name: &str, params: &BTreeMap<String, f64>) -> Result<BuiltinTarget> {
    let Some(keys) = builtin_target_keys(name) else {
        return Err(Error::Argument(format!("unknown target `{name}`")));
    };
    if let Some(k) = params.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(Error::Argument(format!("target `{name}` has no parameter `{k}`")));
    }
    let mut p = params.clone();
    Ok(match name {
        "bimodal" => BuiltinTarget::Bimodal(DiagonalMixture::bimodal()),
        "banana" => {
            let d = Banana::default();
            BuiltinTarget::Banana(Banana::new(take(&mut p, "warp", d.warp), take(&mut p, "sigma", d.sigma))?)
        }
        _ => {
            let d = SirConfig::default();
            let config = SirConfig {
                s0: take(&mut p, "s0", d.s0),
                i0: take(&mut p, "i0", d.i0),
                r0: take(&mut p, "r0", d.r0),
                noise_sd: take(&mut p, "noise", d.noise_sd),
                truth: (take(&mut p, "gamma_true", d.truth.0), take(&mut p, "beta_true", d.truth.1)),
                max_step: take(&mut p, "max_step", d.max_step),
                ..d
            };
            let seed = take(&mut p, "data_seed", 0.0);
            if seed < 0.0 || seed.fract() != 0.0 {
                return Err(Error::Argument("data_seed must be a nonnegative integer".into()));
            }
            BuiltinTarget::Sir(SirPosterior::synthetic(config, seed as u64)?)
        }
    })
}
