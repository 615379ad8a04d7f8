use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::transport::ComposedMap;

/// Negative log-likelihood of a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub total: f64,
    pub mean: f64,
    pub count: usize,
}

impl Nll {
    fn from_logpdf(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("no samples".into()));
        }
        let total = -pairwise_sum(values);
        Ok(Self {
            total,
            mean: total / values.len() as f64,
            count: values.len(),
        })
    }
}

/// `-Σ ln T_♯ρ(x_i)`.
pub fn negative_log_likelihood(map: &ComposedMap, samples: &[Vec<f64>]) -> Result<Nll> {
    Nll::from_logpdf(&map.pushforward_logpdf_batch(samples)?)
}

/// `(Σw)²/Σw²` for `w ∝ exp(ln π - ln q)`.
pub fn ess(log_target: &[f64], log_proposal: &[f64]) -> Result<f64> {
    if log_target.len() != log_proposal.len() {
        return Err(Error::Argument("ESS inputs differ in length".into()));
    }
    let lr: Vec<f64> = log_target
        .iter()
        .zip(log_proposal)
        .map(|(t, p)| t - p)
        .collect();
    ess_from_log_ratios(&lr)
}

pub(crate) fn ess_from_log_ratios(log_w: &[f64]) -> Result<f64> {
    if log_w.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument("log weights contain NaN".into()));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    let s = pairwise_sum(&w);
    Ok(s * s / pairwise_sum(&sq))
}

/// Maximum-likelihood Gaussian fitted on a training set.
#[derive(Debug, Clone)]
pub struct GaussianBaseline {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Ridge added to make the covariance invertible, zero if none.
    pub ridge: f64,
    pub test: Nll,
}

impl GaussianBaseline {
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let chol = Cholesky::new(self.effective_covariance()).expect("validated at fit time");
        gaussian_logpdf(&chol, &self.mean, x)
    }

    fn effective_covariance(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        &self.covariance + DMatrix::identity(d, d) * self.ridge
    }
}

fn gaussian_logpdf(chol: &Cholesky<f64, nalgebra::Dyn>, mean: &DVector<f64>, x: &[f64]) -> f64 {
    let d = mean.len();
    let r = DVector::from_column_slice(x) - mean;
    let z = chol.l().solve_lower_triangular(&r).expect("nonsingular factor");
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

/// Gaussian NLL on `test` with moments estimated on `train`.
pub fn gaussian_baseline(train: &[Vec<f64>], test: &[Vec<f64>]) -> Result<GaussianBaseline> {
    let d = train.first().map_or(0, |r| r.len());
    if d == 0 || train.len() < d + 1 {
        return Err(Error::Argument(format!(
            "need at least d+1 = {} training rows, got {}",
            d + 1,
            train.len()
        )));
    }
    let n = train.len() as f64;
    let mean = DVector::from_fn(d, |k, _| {
        pairwise_sum(&train.iter().map(|r| r[k]).collect::<Vec<_>>()) / n
    });
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let prods: Vec<f64> = train
                .iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .collect();
            let c = pairwise_sum(&prods) / n;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let (chol, ridge) = match Cholesky::new(cov.clone()) {
        Some(c) => (c, 0.0),
        None => {
            let ridge = 1e-6 * cov.trace() / d as f64;
            let c = Cholesky::new(&cov + DMatrix::identity(d, d) * ridge).ok_or_else(|| {
                Error::Numeric("covariance is singular even after ridge".into())
            })?;
            (c, ridge)
        }
    };
    let logpdf: Vec<f64> = test.par_iter().map(|x| gaussian_logpdf(&chol, &mean, x)).collect();
    Ok(GaussianBaseline {
        mean,
        covariance: cov,
        ridge,
        test: Nll::from_logpdf(&logpdf)?,
    })
}

/// `-(1/N) Σ ln π̃(x_d | x_{<d})` for the last coordinate `column`.
///
/// The map's layers must be block triangular with respect to the split
/// between the leading coordinates and `column`.
pub fn conditional_nll(map: &ComposedMap, rows: &[Vec<f64>], column: usize) -> Result<Nll> {
    let d = map.dim();
    if d < 2 || column != d - 1 {
        return Err(Error::Argument(format!(
            "the conditioned column must be the last one ({}), got {column}",
            d.saturating_sub(1)
        )));
    }
    let marginal = map.restrict_prefix(d - 1)?;
    let logpdf = rows
        .par_iter()
        .map(|x| Ok(map.pushforward_logpdf(x)? - marginal.pushforward_logpdf(&x[..d - 1])?))
        .collect::<Result<Vec<f64>>>()?;
    Nll::from_logpdf(&logpdf)
}
