//! Sum-of-squares densities `Φ(x)ᵀ A Φ(x) ρ(x)` with exact marginals and
//! conditional CDFs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::{normalized_legendre, FeatureBasis, GaussLegendre, IndexSet};
use crate::divergence::DENSITY_FLOOR;
use crate::error::{Error, Result};

/// Relative tolerance on the symmetry of `A`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_TOL·‖A‖₂` are clipped instead of rejected.
pub const PSD_TOL: f64 = 1e-10;

/// Integration over one coordinate, `A ↦ P (A ⊙ M) Pᵀ`.
#[derive(Debug, Clone)]
pub struct MarginalOperator {
    coordinate: usize,
    reduced: IndexSet,
    targets: Vec<usize>,
    removed_degrees: Vec<u32>,
}

impl MarginalOperator {
    pub fn new(index: &IndexSet, coordinate: usize) -> Result<Self> {
        let reduced = index.remove_coordinate(coordinate)?;
        let mut targets = Vec::with_capacity(index.len());
        let mut removed_degrees = Vec::with_capacity(index.len());
        for alpha in index.iter() {
            let mut r = alpha.to_vec();
            removed_degrees.push(r.remove(coordinate));
            targets.push(reduced.position(&r).expect("projection lies in reduced set"));
        }
        Ok(Self {
            coordinate,
            reduced,
            targets,
            removed_degrees,
        })
    }

    pub fn coordinate(&self) -> usize {
        self.coordinate
    }

    pub fn reduced(&self) -> &IndexSet {
        &self.reduced
    }

    /// Selection matrix `P` of size `|𝒦₋ₗ| × m`.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.reduced.len(), self.targets.len());
        for (col, &row) in self.targets.iter().enumerate() {
            p[(row, col)] = 1.0;
        }
        p
    }

    /// Mask `M` for an orthonormal univariate family.
    pub fn mask_matrix(&self) -> DMatrix<f64> {
        self.mask_matrix_with(|a, b| if a == b { 1.0 } else { 0.0 })
    }

    /// Mask built from univariate Gram integrals `∫ φ_a φ_b dρ_ℓ`.
    pub fn mask_matrix_with<G: Fn(u32, u32) -> f64>(&self, gram: G) -> DMatrix<f64> {
        let m = self.targets.len();
        DMatrix::from_fn(m, m, |i, j| gram(self.removed_degrees[i], self.removed_degrees[j]))
    }

    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.reduced.len();
        let m = self.targets.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..m {
            let tj = self.targets[j];
            let dj = self.removed_degrees[j];
            for i in 0..m {
                if self.removed_degrees[i] == dj {
                    out[(self.targets[i], tj)] += a[(i, j)];
                }
            }
        }
        out
    }

    pub fn apply_with<G: Fn(u32, u32) -> f64>(&self, a: &DMatrix<f64>, gram: G) -> DMatrix<f64> {
        let n = self.reduced.len();
        let m = self.targets.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..m {
            for i in 0..m {
                let g = gram(self.removed_degrees[i], self.removed_degrees[j]);
                if g != 0.0 {
                    out[(self.targets[i], self.targets[j])] += a[(i, j)] * g;
                }
            }
        }
        out
    }
}

/// Validate symmetry and semidefiniteness, clipping tiny negative eigenvalues.
pub fn validate_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Argument("coefficient matrix must be square".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("coefficient matrix has non-finite entries".into()));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Argument(format!(
            "coefficient matrix is not symmetric (asymmetry {asym:e})"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let norm = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * norm {
        return Err(Error::Argument(format!(
            "coefficient matrix is not positive semidefinite (eigenvalue {min:e})"
        )));
    }
    if min < 0.0 {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        return Ok((&out + out.transpose()) * 0.5);
    }
    Ok(sym)
}

/// Marginal of the density over its leading `i` coordinates.
#[derive(Debug, Clone)]
struct PrefixLevel {
    index: IndexSet,
    a: DMatrix<f64>,
    trace: f64,
    /// Degree of each multi-index in the last prefix coordinate.
    last: Vec<usize>,
    last_max: usize,
    /// Maximal degree per leading coordinate (all but the last).
    lead_max: Vec<usize>,
    rule: GaussLegendre,
}

impl PrefixLevel {
    fn new(index: IndexSet, a: DMatrix<f64>) -> Self {
        let i = index.dim();
        let last: Vec<usize> = index.iter().map(|al| al[i - 1] as usize).collect();
        let last_max = last.iter().copied().max().unwrap_or(0);
        let lead_max = (0..i - 1).map(|k| index.max_degree(k) as usize).collect();
        let trace = a.trace();
        Self {
            index,
            a,
            trace,
            last,
            last_max,
            lead_max,
            rule: GaussLegendre::new(last_max + 1),
        }
    }

    fn conditional(&self, prefix_u: &[f64]) -> ConditionalForm<'_> {
        let m = self.index.len();
        let tables: Vec<Vec<f64>> = prefix_u
            .iter()
            .zip(&self.lead_max)
            .map(|(&u, &n)| normalized_legendre(n, u))
            .collect();
        let psi: Vec<f64> = self
            .index
            .iter()
            .map(|alpha| {
                let mut v = 1.0;
                for (k, t) in tables.iter().enumerate() {
                    v *= t[alpha[k] as usize];
                }
                v
            })
            .collect();
        let n = self.last_max + 1;
        // G[β, b] = Σ_{γ: γ_last = b} A[β, γ] ψ_γ
        let mut g = DMatrix::<f64>::zeros(m, n);
        for (gamma, (&pg, &lg)) in psi.iter().zip(&self.last).enumerate() {
            if pg == 0.0 {
                continue;
            }
            for beta in 0..m {
                g[(beta, lg)] += self.a[(beta, gamma)] * pg;
            }
        }
        let mut c = DMatrix::<f64>::zeros(n, n);
        for (beta, (&pb, &lb)) in psi.iter().zip(&self.last).enumerate() {
            if pb == 0.0 {
                continue;
            }
            for b in 0..n {
                c[(lb, b)] += pb * g[(beta, b)];
            }
        }
        let c = (&c + c.transpose()) * 0.5;
        let trace = c.trace();
        let fallback = !(trace > DENSITY_FLOOR * self.trace.max(DENSITY_FLOOR));
        ConditionalForm {
            c,
            trace,
            fallback,
            degree: self.last_max,
            rule: &self.rule,
        }
    }
}

/// Conditional density of one canonical coordinate given those before it,
/// `s ↦ L(s)ᵀ C L(s) / (2 tr C)` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct ConditionalForm<'a> {
    c: DMatrix<f64>,
    trace: f64,
    fallback: bool,
    degree: usize,
    rule: &'a GaussLegendre,
}

/// Root-finding tolerance on the canonical coordinate.
pub const INVERSION_TOL: f64 = 1e-12;
const BRACKET_WIDTH: f64 = 1e-3;
const MAX_NEWTON: usize = 100;

impl ConditionalForm<'_> {
    /// True when the prefix marginal vanished and the uniform conditional is used.
    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    /// Mass of the prefix marginal relative to the level normalizer.
    pub fn prefix_mass(&self) -> f64 {
        self.trace
    }

    fn quad(&self, s: f64) -> f64 {
        let l = normalized_legendre(self.degree, s);
        let mut acc = 0.0;
        for a in 0..=self.degree {
            let mut row = 0.0;
            for b in 0..=self.degree {
                row += self.c[(a, b)] * l[b];
            }
            acc += l[a] * row;
        }
        acc.max(0.0)
    }

    /// Density with respect to Lebesgue measure on `[-1, 1]`.
    pub fn pdf(&self, s: f64) -> f64 {
        if self.fallback {
            return 0.5;
        }
        self.quad(s) / (2.0 * self.trace)
    }

    pub fn log_pdf(&self, s: f64) -> f64 {
        self.pdf(s).ln()
    }

    /// `∫_{-1}^{v} pdf`, exact Gauss–Legendre on the polynomial integrand.
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        if self.fallback {
            return 0.5 * (v + 1.0);
        }
        let raw = self.rule.integrate(-1.0, v, |s| self.quad(s));
        (raw / (2.0 * self.trace)).clamp(0.0, 1.0)
    }

    fn polish(&self, v: f64, p: f64, lo: f64, hi: f64) -> f64 {
        let d = self.pdf(v);
        if d > 0.0 {
            let next = v - (self.cdf(v) - p) / d;
            if next >= lo && next <= hi {
                return next;
            }
        }
        v
    }

    /// Solve `cdf(v) = p` by bisection to a small bracket, then safeguarded Newton.
    pub fn inverse_cdf(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Numeric(format!("target probability {p} outside [0, 1]")));
        }
        if self.fallback {
            return Ok(2.0 * p - 1.0);
        }
        if p == 0.0 {
            return Ok(-1.0);
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while hi - lo > BRACKET_WIDTH {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut v = 0.5 * (lo + hi);
        for _ in 0..MAX_NEWTON {
            let f = self.cdf(v) - p;
            if f == 0.0 {
                return Ok(v);
            }
            if f < 0.0 {
                lo = v;
            } else {
                hi = v;
            }
            let d = self.pdf(v);
            let mut next = if d > 0.0 { v - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - v).abs();
            v = next;
            if step <= INVERSION_TOL || hi - lo <= INVERSION_TOL {
                return Ok(self.polish(v, p, lo, hi));
            }
        }
        Err(Error::Numeric(format!(
            "conditional CDF inversion did not converge for p = {p} (bracket [{lo}, {hi}])"
        )))
    }
}

/// SoS density over a feature basis.
#[derive(Debug, Clone)]
pub struct SosDensity {
    basis: FeatureBasis,
    a: DMatrix<f64>,
    normalized: bool,
    chain: Arc<Vec<PrefixLevel>>,
}

impl SosDensity {
    /// Unnormalized SoS function `g_A = Φᵀ A Φ ρ`.
    pub fn new(basis: FeatureBasis, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != basis.len() {
            return Err(Error::Argument(format!(
                "matrix has size {}, basis has {} features",
                a.nrows(),
                basis.len()
            )));
        }
        let a = validate_psd(&a)?;
        let chain = Arc::new(build_chain(&basis, &a)?);
        Ok(Self {
            basis,
            a,
            normalized: false,
            chain,
        })
    }

    /// Normalized density `Φᵀ A Φ ρ / tr A`; the stored matrix has unit trace.
    pub fn normalized(basis: FeatureBasis, a: DMatrix<f64>) -> Result<Self> {
        let t = a.trace();
        if !(t > 1e-12) {
            return Err(Error::DegenerateFit(t));
        }
        let mut out = Self::new(basis, a / t)?;
        out.normalized = true;
        Ok(out)
    }

    /// The reference density itself, `A = e₁e₁ᵀ`.
    pub fn reference(basis: FeatureBasis) -> Result<Self> {
        let m = basis.len();
        let c = basis.constant_position();
        let mut a = DMatrix::zeros(m, m);
        a[(c, c)] = 1.0;
        Self::normalized(basis, a)
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        self.a.trace()
    }

    pub fn to_normalized(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        Self::normalized(self.basis.clone(), self.a.clone())
    }

    /// `Φ(u)ᵀ A Φ(u)` at canonical coordinates.
    pub fn quadratic_form_canonical(&self, u: &[f64]) -> f64 {
        let phi = self.basis.eval_canonical(u);
        quadratic_form(&self.a, &phi)
    }

    /// Density divided by the reference density, at canonical coordinates.
    pub fn ratio_canonical(&self, u: &[f64]) -> f64 {
        let q = self.quadratic_form_canonical(u);
        if self.normalized {
            q / self.trace()
        } else {
            q
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_evaluate(x)?.exp())
    }

    pub fn log_evaluate(&self, x: &[f64]) -> Result<f64> {
        let u = self.basis.reference().to_canonical(x)?;
        let lr = self.basis.reference().log_density(x)?;
        Ok(self.ratio_canonical(&u).ln() + lr)
    }

    /// `∫ g_A`, which is `tr A` by orthonormality.
    pub fn integrate(&self) -> f64 {
        if self.normalized {
            1.0
        } else {
            self.trace()
        }
    }

    /// Integrate out coordinate `l` (zero-based).
    pub fn marginalize(&self, l: usize) -> Result<Self> {
        if l >= self.dim() {
            return Err(Error::Argument(format!(
                "coordinate {l} out of range for dimension {}",
                self.dim()
            )));
        }
        let op = MarginalOperator::new(self.basis.index(), l)?;
        let basis = self.basis.without(l)?;
        let mut out = Self::new(basis, op.apply(&self.a))?;
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Marginalize with a non-orthonormal univariate family described by its
    /// Gram integrals in coordinate `l`.
    pub fn marginalize_matrix_with<G: Fn(u32, u32) -> f64>(
        &self,
        l: usize,
        gram: G,
    ) -> Result<DMatrix<f64>> {
        let op = MarginalOperator::new(self.basis.index(), l)?;
        Ok(op.apply_with(&self.a, gram))
    }

    /// Conditional law of canonical coordinate `i` (zero-based) given the
    /// canonical prefix `u[..i]`.
    pub fn conditional_form(&self, i: usize, prefix_u: &[f64]) -> ConditionalForm<'_> {
        debug_assert_eq!(prefix_u.len(), i);
        self.chain[i].conditional(prefix_u)
    }

    fn split_prefix(&self, prefix: &[f64], xi: f64) -> Result<(Vec<f64>, f64)> {
        let i = prefix.len();
        if i >= self.dim() {
            return Err(Error::Argument(format!(
                "prefix of length {i} leaves no coordinate in dimension {}",
                self.dim()
            )));
        }
        let reference = self.basis.reference();
        let mut u = Vec::with_capacity(i);
        for (k, &x) in prefix.iter().enumerate() {
            u.push(reference.map(k).to_canonical(x)?);
        }
        let ui = reference.map(i).to_canonical(xi)?;
        Ok((u, ui))
    }

    /// `π(x_i | x_{<i})` in the original coordinates.
    pub fn conditional_pdf(&self, prefix: &[f64], xi: f64) -> Result<f64> {
        let (u, ui) = self.split_prefix(prefix, xi)?;
        let form = self.conditional_form(prefix.len(), &u);
        let lr = self.basis.reference().map(prefix.len()).log_density(xi)?;
        Ok(form.pdf(ui) * 2.0 * lr.exp())
    }

    pub fn conditional_cdf(&self, prefix: &[f64], xi: f64) -> Result<f64> {
        let (u, ui) = self.split_prefix(prefix, xi)?;
        Ok(self.conditional_form(prefix.len(), &u).cdf(ui))
    }

    /// Marginal over the leading `k` coordinates, from the cached chain.
    pub fn prefix_marginal(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::Argument(format!("invalid prefix length {k}")));
        }
        if k == self.dim() {
            return Ok(self.clone());
        }
        let level = &self.chain[k - 1];
        let basis = FeatureBasis::new(
            level.index.clone(),
            self.basis.reference().select(&(0..k).collect::<Vec<_>>()),
        )?;
        let mut out = Self::new(basis, level.a.clone())?;
        out.normalized = self.normalized;
        Ok(out)
    }
}

pub fn quadratic_form(a: &DMatrix<f64>, phi: &DVector<f64>) -> f64 {
    let v = (phi.transpose() * a * phi)[(0, 0)];
    v.max(0.0)
}

fn build_chain(basis: &FeatureBasis, a: &DMatrix<f64>) -> Result<Vec<PrefixLevel>> {
    let d = basis.dim();
    let mut levels = Vec::with_capacity(d);
    let mut index = basis.index().clone();
    let mut mat = a.clone();
    for i in (1..=d).rev() {
        let next = if i > 1 {
            let op = MarginalOperator::new(&index, i - 1)?;
            Some((op.reduced().clone(), op.apply(&mat)))
        } else {
            None
        };
        levels.push(PrefixLevel::new(index.clone(), mat.clone()));
        if let Some((ni, nm)) = next {
            index = ni;
            mat = nm;
        }
    }
    levels.reverse();
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{tensor_rule, ReferenceMeasure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose()
    }

    #[test]
    fn evaluate_examples() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(1), 1).unwrap();
        let s = SosDensity::new(basis.clone(), DMatrix::identity(2, 2)).unwrap();
        let x = 0.3;
        assert!((s.evaluate(&[x]).unwrap() - (1.0 + 3.0 * x * x) / 2.0).abs() < 1e-15);
        assert_eq!(s.integrate(), 2.0);
        let r = SosDensity::reference(basis).unwrap();
        assert!((r.evaluate(&[x]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tensor_marginal_example() {
        let index = IndexSet::tensor(&[1, 1]).unwrap();
        let basis = FeatureBasis::new(index, ReferenceMeasure::uniform_cube(2)).unwrap();
        let s = SosDensity::new(basis, DMatrix::identity(4, 4)).unwrap();
        let m = s.marginalize(1).unwrap();
        assert_eq!(m.matrix(), &(DMatrix::identity(2, 2) * 2.0));
        let op = MarginalOperator::new(s.basis().index(), 1).unwrap();
        let p = op.selection_matrix();
        let explicit = &p * s.matrix().component_mul(&op.mask_matrix()) * p.transpose();
        assert_eq!(explicit, *m.matrix());
    }

    #[test]
    fn rejects_indefinite_matrices() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(1), 1).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(SosDensity::new(basis, a).is_err());
    }

    #[test]
    fn marginalization_commutes_and_conserves_mass() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(3), 2).unwrap();
        let s = SosDensity::new(basis.clone(), random_psd(basis.len(), 5)).unwrap();
        let a = s.marginalize(0).unwrap().marginalize(0).unwrap();
        let b = s.marginalize(1).unwrap().marginalize(0).unwrap();
        assert!((a.matrix() - b.matrix()).amax() < 1e-12);
        assert!((a.integrate() - s.integrate()).abs() < 1e-12 * s.integrate());
        let full = a.marginalize(0);
        assert!(full.is_err());
    }

    #[test]
    fn conditional_integrates_to_one() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(2), 3).unwrap();
        let s = SosDensity::normalized(basis.clone(), random_psd(basis.len(), 9)).unwrap();
        let (pts, w) = tensor_rule(1, 10);
        for x1 in [-0.9, -0.2, 0.4, 0.95] {
            let total: f64 = pts
                .iter()
                .zip(&w)
                .map(|(p, wt)| wt * s.conditional_pdf(&[x1], p[0]).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(s.conditional_cdf(&[x1], -1.0).unwrap().abs() < 1e-15);
            assert!((s.conditional_cdf(&[x1], 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_cdf_solves_to_tolerance() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(2), 4).unwrap();
        let s = SosDensity::normalized(basis.clone(), random_psd(basis.len(), 2)).unwrap();
        let form = s.conditional_form(1, &[0.25]);
        for p in [1e-9, 0.01, 0.3, 0.5, 0.77, 0.999999] {
            let v = form.inverse_cdf(p).unwrap();
            assert!((form.cdf(v) - p).abs() < 1e-12, "{p} {v} {} {}", form.cdf(v), form.pdf(v));
        }
    }
}
