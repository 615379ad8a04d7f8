//! Convex fitting of SoS densities over the PSD cone.

mod conic;
mod psd;

pub use conic::{
    cone_membership, encode_conic, minimal_epigraph, Cone, ConicProgram, Expr, CONIC_FORMAT,
};
pub use psd::{psd_project, psd_project_with_eigenvalues};

use nalgebra::{DMatrix, DVector};

use crate::basis::FeatureBasis;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::sos::SosDensity;

/// Which discretized objective is minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// `Σ w_i φ_α(r_i/q_i) q_i` with `r_i = f(x_i)/ρ(x_i)`.
    DivergenceMc { alpha: f64 },
    /// `-Σ w_i ln q_i + ∫g`.
    KlData,
}

/// How `∫ g_A` enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralMode {
    /// `tr A`, exact by orthonormality.
    Trace,
    /// `Σ w_i q_i`, the sample estimate of the same integral.
    Samples,
}

/// Discretized α-divergence or likelihood objective over `A ⪰ 0`.
#[derive(Debug, Clone)]
pub struct FitProblem {
    basis: FeatureBasis,
    features: DMatrix<f64>,
    weights: Vec<f64>,
    ratios: Vec<f64>,
    kind: ObjectiveKind,
    integral: IntegralMode,
}

impl FitProblem {
    /// Divergence objective with `features` (N×m, rows `Φ(x_i)`) and
    /// `ratios` `f(x_i)/ρ(x_i)`; weights default to `1/N`.
    pub fn divergence(
        basis: FeatureBasis,
        features: DMatrix<f64>,
        ratios: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::Argument(format!("alpha must be finite, got {alpha}")));
        }
        if ratios.len() != features.nrows() {
            return Err(Error::Argument("one ratio per sample is required".into()));
        }
        if ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Argument("target ratios must be finite and nonnegative".into()));
        }
        Self::build(basis, features, ratios, ObjectiveKind::DivergenceMc { alpha })
    }

    /// Likelihood objective on samples from the target.
    pub fn kl_data(basis: FeatureBasis, features: DMatrix<f64>) -> Result<Self> {
        Self::build(basis, features, Vec::new(), ObjectiveKind::KlData)
    }

    fn build(
        basis: FeatureBasis,
        features: DMatrix<f64>,
        ratios: Vec<f64>,
        kind: ObjectiveKind,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Argument("fit problem has no samples".into()));
        }
        if features.ncols() != basis.len() {
            return Err(Error::Argument(format!(
                "features have {} columns, basis has {}",
                features.ncols(),
                basis.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("feature matrix has non-finite entries".into()));
        }
        Ok(Self {
            basis,
            features,
            weights: vec![1.0 / n as f64; n],
            ratios,
            kind,
            integral: IntegralMode::Trace,
        })
    }

    /// Replace the sample weights, e.g. by quadrature weights.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("weights must be nonnegative, one per sample".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_integral(mut self, mode: IntegralMode) -> Result<Self> {
        if mode == IntegralMode::Samples && self.kind == ObjectiveKind::KlData {
            return Err(Error::Argument(
                "the likelihood objective needs the exact trace integral".into(),
            ));
        }
        self.integral = mode;
        Ok(self)
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn integral(&self) -> IntegralMode {
        self.integral
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `q_i = Φ(x_i)ᵀ A Φ(x_i)`.
    pub fn quadratic_forms(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let fa = &self.features * a;
        (0..self.len())
            .map(|i| fa.row(i).dot(&self.features.row(i)).max(0.0))
            .collect()
    }

    /// Objective value at `A` (no floor on `q`).
    pub fn objective(&self, a: &DMatrix<f64>) -> f64 {
        let q = self.quadratic_forms(a);
        Evaluator::new(self, 1.0).value(&q, a.trace(), 0.0)
    }
}

/// Per-sample pieces of the objective.
struct Evaluator<'a> {
    problem: &'a FitProblem,
    ratios: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a FitProblem, scale: f64) -> Self {
        Self {
            problem,
            ratios: problem.ratios.iter().map(|r| r / scale).collect(),
        }
    }

    /// Coefficient of `q` moved into the trace term in trace mode.
    fn kappa(&self) -> f64 {
        match self.problem.kind {
            ObjectiveKind::KlData => 1.0,
            ObjectiveKind::DivergenceMc { alpha } => {
                if alpha == 1.0 {
                    1.0
                } else if alpha == 0.0 {
                    -1.0
                } else {
                    1.0 / alpha
                }
            }
        }
    }

    /// Value and derivative in `q` of the full per-sample term.
    fn term(&self, i: usize, q: f64) -> (f64, f64) {
        match self.problem.kind {
            ObjectiveKind::KlData => (-q.ln(), -1.0 / q),
            ObjectiveKind::DivergenceMc { alpha } => {
                let r = self.ratios[i];
                if alpha == 1.0 {
                    if r == 0.0 {
                        (q, 1.0)
                    } else {
                        (r * (r / q).ln() - r + q, 1.0 - r / q)
                    }
                } else if alpha == 0.0 {
                    if r == 0.0 {
                        (f64::INFINITY, f64::INFINITY)
                    } else {
                        (q * (q / r).ln() + r - q, (q / r).ln())
                    }
                } else if r == 0.0 {
                    if alpha > 0.0 {
                        (q / alpha, 1.0 / alpha)
                    } else {
                        (f64::INFINITY, f64::INFINITY)
                    }
                } else {
                    let s = (alpha * (r / q).ln()).exp();
                    let v = r * (r / q).powf(alpha - 1.0) / (alpha * (alpha - 1.0))
                        - r / (alpha - 1.0)
                        + q / alpha;
                    (v, (1.0 - s) / alpha)
                }
            }
        }
    }

    fn uses_trace(&self) -> bool {
        self.problem.integral == IntegralMode::Trace || self.problem.kind == ObjectiveKind::KlData
    }

    fn value(&self, q: &[f64], trace: f64, floor: f64) -> f64 {
        let w = &self.problem.weights;
        let kappa = if self.uses_trace() { self.kappa() } else { 0.0 };
        let mut terms = Vec::with_capacity(q.len());
        for (i, &qi) in q.iter().enumerate() {
            let qi = qi.max(floor);
            let (v, _) = self.term(i, qi);
            let lin = if self.problem.kind == ObjectiveKind::KlData { 0.0 } else { kappa * qi };
            terms.push(w[i] * (v - lin));
        }
        let integral = if self.uses_trace() { self.kappa() * trace } else { 0.0 };
        pairwise_sum(&terms) + integral
    }

    /// Value and gradient in `A`.
    fn value_and_gradient(&self, a: &DMatrix<f64>, floor_rel: f64) -> (f64, DMatrix<f64>) {
        let p = self.problem;
        let trace = a.trace();
        let floor = floor_rel * trace.max(0.0);
        let q = p.quadratic_forms(a);
        let value = self.value(&q, trace, floor);
        let kappa = if self.uses_trace() { self.kappa() } else { 0.0 };
        let mut coeff = DVector::zeros(q.len());
        for (i, &qi) in q.iter().enumerate() {
            let (_, d) = self.term(i, qi.max(floor));
            let lin = if p.kind == ObjectiveKind::KlData { 0.0 } else { kappa };
            coeff[i] = p.weights[i] * (d - lin);
        }
        let mut scaled = p.features.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= coeff[i];
        }
        let mut grad = p.features.transpose() * scaled;
        if self.uses_trace() {
            for k in 0..grad.nrows() {
                grad[(k, k)] += self.kappa();
            }
        }
        let grad = (&grad + grad.transpose()) * 0.5;
        (value, grad)
    }
}

/// Initial step rule for the projected-gradient line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Always start the backtracking from this step.
    Fixed(f64),
    /// Barzilai–Borwein step from the previous iterate, first step fixed.
    BarzilaiBorwein(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub relative_tol: f64,
    pub relative_window: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub step: StepRule,
    /// Per-sample floor on `q`, relative to `tr A`.
    pub floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            gradient_tol: 1e-7,
            relative_tol: 1e-10,
            relative_window: 10,
            armijo: 1e-4,
            shrink: 0.5,
            step: StepRule::BarzilaiBorwein(1.0),
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Normalized fitted density `A/tr A`.
    pub density: SosDensity,
    /// Minimizer in the original scale of the target values.
    pub matrix: DMatrix<f64>,
    pub raw_trace: f64,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `e₁e₁ᵀ + 10⁻⁶ I` where `e₁` selects the constant feature.
pub fn initial_matrix(basis: &FeatureBasis) -> DMatrix<f64> {
    let m = basis.len();
    let c = basis.constant_position();
    let mut a = DMatrix::identity(m, m) * 1e-6;
    a[(c, c)] += 1.0;
    a
}

/// Minimize the objective over `A ⪰ 0` by projected gradient with Armijo
/// backtracking.
///
/// Divergence objectives are positively homogeneous in `(f, A)`, so the
/// target values are rescaled to unit mean before solving and the minimizer
/// is scaled back afterwards.
pub fn fit_sos(problem: &FitProblem, config: &SolverConfig) -> Result<FitResult> {
    let mut warnings = Vec::new();
    let m = problem.basis.len();
    if problem.len() < m {
        warnings.push(format!("{} samples for {} features", problem.len(), m));
    }
    let scale = match problem.kind {
        ObjectiveKind::KlData => 1.0,
        ObjectiveKind::DivergenceMc { .. } => {
            let s = pairwise_sum(
                &problem
                    .ratios
                    .iter()
                    .zip(&problem.weights)
                    .map(|(r, w)| r * w)
                    .collect::<Vec<_>>(),
            ) / pairwise_sum(&problem.weights);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::DegenerateFit(s));
            }
            s
        }
    };
    let eval = Evaluator::new(problem, scale);
    let mut a = initial_matrix(&problem.basis);
    let (mut f, mut g) = eval.value_and_gradient(&a, config.floor);
    if !f.is_finite() {
        return Err(Error::Numeric(format!("objective is {f} at the initial point")));
    }
    let initial = f;
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut last_step = match config.step {
        StepRule::Fixed(s) | StepRule::BarzilaiBorwein(s) => s,
    };

    for it in 1..=config.max_iterations {
        iterations = it;
        let pg = (&a - psd_project(&(&a - &g))?).norm();
        if pg <= config.gradient_tol * (1.0 + a.norm()) {
            converged = true;
            break;
        }
        let mut step = match (config.step, &prev) {
            (StepRule::Fixed(s), _) => s,
            (StepRule::BarzilaiBorwein(_), Some((s, y))) => {
                let sy = s.dot(y);
                if sy > 0.0 {
                    s.dot(s) / sy
                } else {
                    last_step
                }
            }
            (StepRule::BarzilaiBorwein(s0), None) => s0,
        };
        let mut accepted = None;
        while step > 1e-30 {
            let candidate = psd_project(&(&a - &g * step))?;
            // A = 0 is never a minimizer but can have finite objective for
            // 0 < α < 1, where the gradient is singular.
            if candidate.trace() <= 1e-6 * a.trace() {
                step *= config.shrink;
                continue;
            }
            let d = &candidate - &a;
            let decrease = g.dot(&d);
            let (fc, gc) = eval.value_and_gradient(&candidate, config.floor);
            if fc.is_finite() && fc <= f + config.armijo * decrease {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= config.shrink;
        }
        let Some((next, fn_, gn)) = accepted else {
            // No descent possible along the projected direction.
            converged = true;
            break;
        };
        last_step = step;
        prev = Some((&next - &a, &gn - &g));
        a = next;
        f = fn_;
        g = gn;
        history.push(f);
        let w = config.relative_window;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            if old - f <= config.relative_tol * f.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    let raw = &a * scale;
    let raw_trace = raw.trace();
    if !(raw_trace >= 1e-12 * scale.max(1.0)) || !(a.trace() >= 1e-12) {
        return Err(Error::DegenerateFit(raw_trace));
    }
    let density = SosDensity::normalized(problem.basis.clone(), raw.clone())?;
    Ok(FitResult {
        density,
        matrix: raw,
        raw_trace,
        objective: f * scale,
        initial_objective: initial * scale,
        iterations,
        converged,
        history: history.into_iter().map(|v| v * scale).collect(),
        warnings,
    })
}
