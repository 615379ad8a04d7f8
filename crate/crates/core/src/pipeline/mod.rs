//! Sequential drivers, diagnostics, preprocessing and baselines.

mod data;
mod dataset;
mod density;
mod metrics;
mod report;

pub use data::{fit_from_data, DataSchedule};

pub use dataset::{parse_csv, preprocess, Dataset, PreprocessConfig, Table};
pub use density::fit_from_density;
pub use metrics::{
    conditional_nll, ess, gaussian_baseline, negative_log_likelihood, GaussianBaseline, Nll,
};
pub use report::{format_f64, RunReport};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{FeatureBasis, ReferenceMeasure};
use crate::bridging::{DEFAULT_B, DEFAULT_RHO, DEFAULT_T_MAX};
use crate::error::{Error, Result};
use crate::fit::{IntegralMode, SolverConfig};
use crate::transport::ComposedMap;

/// Discretization points of the density-mode objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// `samples` fresh reference draws per layer.
    MonteCarlo,
    /// Tensor Gauss–Legendre rule with this many nodes per coordinate, in
    /// canonical coordinates.
    Quadrature(usize),
}

/// Settings shared by the density-mode and data-mode drivers.
#[derive(Debug, Clone)]
pub struct SequentialConfig {
    pub alpha: f64,
    /// Total polynomial degree of every layer's feature basis.
    pub degree: u32,
    pub reference: ReferenceMeasure,
    /// Rank of lazy layers; `None` fits full-dimensional layers.
    pub lazy_rank: Option<usize>,
    /// Reference draws per layer in density mode.
    pub samples: usize,
    pub discretization: Discretization,
    /// Fresh reference draws used for per-layer diagnostics in density mode.
    pub diagnostic_samples: usize,
    pub solver: SolverConfig,
    pub integral: IntegralMode,
    pub seed: u64,
    /// Noise realizations per training point in data mode.
    pub enrichment: usize,
    pub l0: usize,
    pub layers_max: usize,
    pub diffusion_b: f64,
    pub diffusion_rho: f64,
    pub t_max: f64,
    /// Largest fraction of diffused samples that may fail to pull back.
    pub drop_cap: f64,
}

impl SequentialConfig {
    pub fn new(reference: ReferenceMeasure) -> Self {
        Self {
            alpha: 1.0,
            degree: 2,
            reference,
            lazy_rank: None,
            samples: 1000,
            discretization: Discretization::MonteCarlo,
            diagnostic_samples: 2000,
            solver: SolverConfig::default(),
            integral: IntegralMode::Trace,
            seed: 0,
            enrichment: 1,
            l0: 10,
            layers_max: 20,
            diffusion_b: DEFAULT_B,
            diffusion_rho: DEFAULT_RHO,
            t_max: DEFAULT_T_MAX,
            drop_cap: 0.01,
        }
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    fn validate(&self) -> Result<()> {
        if let (Discretization::Quadrature(q), Some(_)) = (self.discretization, self.lazy_rank) {
            if q > 0 {
                return Err(Error::Argument("quadrature discretization needs full layers".into()));
            }
        }
        if self.discretization == Discretization::Quadrature(0) {
            return Err(Error::Argument("quadrature needs at least one node".into()));
        }
        if let Some(r) = self.lazy_rank {
            if r == 0 || r > self.dim() {
                return Err(Error::Argument(format!(
                    "lazy rank {r} must lie in 1..={}",
                    self.dim()
                )));
            }
            if !self.reference.is_gaussian() {
                return Err(Error::Argument(
                    "lazy layers require a standard Gaussian reference".into(),
                ));
            }
        }
        if self.samples == 0 || self.enrichment == 0 || self.layers_max == 0 {
            return Err(Error::Argument(
                "sample budget, enrichment and layer cap must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.drop_cap) {
            return Err(Error::Argument("drop cap must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Echo of the configuration into a report.
    fn echo(&self, report: &mut RunReport) {
        report.set_f64("config.alpha", self.alpha);
        report.set("config.degree", self.degree);
        let maps: Vec<&str> = self.reference.maps().iter().map(|m| m.name()).collect();
        report.set("config.reference", maps.join(","));
        report.set(
            "config.lazy_rank",
            self.lazy_rank.map_or("off".to_string(), |r| r.to_string()),
        );
        report.set("config.samples", self.samples);
        report.set(
            "config.discretization",
            match self.discretization {
                Discretization::MonteCarlo => "monte-carlo".to_string(),
                Discretization::Quadrature(q) => format!("quadrature {q}"),
            },
        );
        report.set("config.diagnostic_samples", self.diagnostic_samples);
        report.set(
            "config.integral",
            match self.integral {
                IntegralMode::Trace => "trace",
                IntegralMode::Samples => "samples",
            },
        );
        report.set("config.max_iterations", self.solver.max_iterations);
        report.set("config.seed", self.seed);
        report.set("config.enrichment", self.enrichment);
        report.set("config.l0", self.l0);
        report.set("config.layers_max", self.layers_max);
        report.set_f64("config.diffusion_b", self.diffusion_b);
        report.set_f64("config.diffusion_rho", self.diffusion_rho);
        report.set_f64("config.t_max", self.t_max);
    }
}

/// A fitted map and its run record.
#[derive(Debug, Clone)]
pub struct Run {
    pub map: ComposedMap,
    pub report: RunReport,
}

/// A driver that stopped early; `partial` holds the layers fitted so far.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: Error,
    pub partial: Box<Run>,
}

impl From<PipelineFailure> for Error {
    fn from(f: PipelineFailure) -> Self {
        f.error
    }
}

fn failure(error: Error, map: &ComposedMap, mut report: RunReport) -> PipelineFailure {
    report.set("status", "failed");
    report.set("error", error.to_string().replace('\n', " "));
    PipelineFailure {
        error,
        partial: Box::new(Run {
            map: map.clone(),
            report,
        }),
    }
}

/// Feature matrix with rows `Φ(u_i)` for canonical points `u_i`.
fn feature_matrix(basis: &FeatureBasis, canonical: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: Vec<DVector<f64>> = canonical.par_iter().map(|u| basis.eval_canonical(u)).collect();
    let mut out = DMatrix::zeros(rows.len(), basis.len());
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&r.transpose());
    }
    out
}

/// One fitted layer and the solver record behind it.
struct LayerFit {
    layer: crate::transport::Layer,
    fit: crate::fit::FitResult,
    warnings: Vec<String>,
}

/// Fits layer `level` on points `xi` in the map's reference coordinates.
/// `ratios` selects the divergence objective; `None` fits by likelihood.
fn fit_layer(
    config: &SequentialConfig,
    level: usize,
    xi: &[Vec<f64>],
    ratios: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
) -> Result<LayerFit> {
    use crate::fit::{fit_sos, FitProblem};
    use crate::rng::{derive_seed, Purpose};
    use crate::transport::{sample_stiefel, LazyLayer, Layer, TriangularMap};

    let (inner_ref, subspace, canonical) = match config.lazy_rank {
        Some(r) => {
            let u = sample_stiefel(
                config.dim(),
                r,
                derive_seed(config.seed, Purpose::Stiefel, level as u64),
            )?;
            let inner = ReferenceMeasure::gaussian(r);
            let ut = u.transpose();
            let canonical = xi
                .par_iter()
                .map(|x| {
                    let z = &ut * DVector::from_column_slice(x);
                    inner.to_canonical(z.as_slice())
                })
                .collect::<Result<Vec<_>>>()?;
            (inner, Some(u), canonical)
        }
        None => {
            let r = &config.reference;
            let canonical = xi
                .par_iter()
                .map(|x| r.to_canonical(x))
                .collect::<Result<Vec<_>>>()?;
            (r.clone(), None, canonical)
        }
    };
    let basis = FeatureBasis::total_degree(inner_ref, config.degree)?;
    let mut warnings = Vec::new();
    if xi.len() < basis.len() {
        warnings.push(format!(
            "layer {level}: {} samples for {} features",
            xi.len(),
            basis.len()
        ));
    }
    let features = feature_matrix(&basis, &canonical);
    let problem = match ratios {
        Some(r) => FitProblem::divergence(basis, features, r, config.alpha)?
            .with_integral(config.integral)?,
        None => FitProblem::kl_data(basis, features)?,
    };
    let problem = match weights {
        Some(w) => problem.with_weights(w)?,
        None => problem,
    };
    let fit = fit_sos(&problem, &config.solver)?;
    let map = TriangularMap::from_sos(&fit.density)?;
    let layer = match subspace {
        Some(u) => Layer::Lazy(LazyLayer::new(u, map)?),
        None => Layer::Full(map),
    };
    Ok(LayerFit {
        layer,
        fit,
        warnings,
    })
}

fn record_fit(report: &mut RunReport, level: usize, lf: &LayerFit) {
    let p = format!("layer.{level}");
    report.set_f64(format!("{p}.objective"), lf.fit.objective);
    report.set_f64(format!("{p}.initial_objective"), lf.fit.initial_objective);
    report.set(format!("{p}.iterations"), lf.fit.iterations);
    report.set(format!("{p}.converged"), lf.fit.converged);
    report.set_f64(format!("{p}.raw_trace"), lf.fit.raw_trace);
    let warnings: Vec<&str> = lf
        .warnings
        .iter()
        .chain(&lf.fit.warnings)
        .map(|s| s.as_str())
        .collect();
    if !warnings.is_empty() {
        report.set(format!("{p}.warnings"), warnings.join("; "));
    }
}
