//! Tensorized orthonormal polynomial features over product reference measures.

mod index_set;
mod legendre;
mod quadrature;
mod reference;

pub use index_set::{IndexSet, DEFAULT_SIZE_CAP};
pub use legendre::{legendre_into, normalized_legendre, normalized_legendre_into, LegendreSeries};
pub use quadrature::{partial_integral, tensor_rule, GaussLegendre};
pub use reference::{std_normal_log_pdf, Direction, MapKind, MeasureKind, ReferenceMeasure};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `make_total_degree_set` with the default size cap.
pub fn make_total_degree_set(d: usize, p: u32) -> Result<IndexSet> {
    IndexSet::total_degree(d, p)
}

/// Features `Φ_i(x) = ∏_k L_{α_k}(R_k(x_k))` with `L_n = √(2n+1) P_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBasis {
    index: IndexSet,
    reference: ReferenceMeasure,
    max_degrees: Vec<usize>,
}

impl FeatureBasis {
    pub fn new(index: IndexSet, reference: ReferenceMeasure) -> Result<Self> {
        if index.dim() != reference.dim() {
            return Err(Error::Argument(format!(
                "index set dimension {} does not match reference dimension {}",
                index.dim(),
                reference.dim()
            )));
        }
        if !index.contains_zero() {
            return Err(Error::Argument(
                "index set must contain the zero multi-index".into(),
            ));
        }
        let max_degrees = (0..index.dim())
            .map(|k| index.max_degree(k) as usize)
            .collect();
        Ok(Self {
            index,
            reference,
            max_degrees,
        })
    }

    pub fn total_degree(reference: ReferenceMeasure, p: u32) -> Result<Self> {
        let index = IndexSet::total_degree(reference.dim(), p)?;
        Self::new(index, reference)
    }

    pub fn index(&self) -> &IndexSet {
        &self.index
    }

    pub fn reference(&self) -> &ReferenceMeasure {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn max_degree(&self, k: usize) -> usize {
        self.max_degrees[k]
    }

    /// Position of the constant feature.
    pub fn constant_position(&self) -> usize {
        self.index
            .position(&vec![0; self.dim()])
            .expect("validated at construction")
    }

    /// Features at canonical coordinates `u ∈ [-1, 1]^d`.
    pub fn eval_canonical(&self, u: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.eval_canonical_into(u, out.as_mut_slice());
        out
    }

    pub fn eval_canonical_into(&self, u: &[f64], out: &mut [f64]) {
        let tables = self.univariate_tables(u);
        for (i, alpha) in self.index.iter().enumerate() {
            let mut v = 1.0;
            for (k, &a) in alpha.iter().enumerate() {
                if a != 0 {
                    v *= tables[k][a as usize];
                }
            }
            out[i] = v;
        }
    }

    fn univariate_tables(&self, u: &[f64]) -> Vec<Vec<f64>> {
        u.iter()
            .zip(&self.max_degrees)
            .map(|(&uk, &n)| normalized_legendre(n, uk))
            .collect()
    }

    /// Features at a point of the reference domain.
    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        let u = self.reference.to_canonical(x)?;
        Ok(self.eval_canonical(&u))
    }

    /// Basis over all coordinates except `l`.
    pub fn without(&self, l: usize) -> Result<Self> {
        Self::new(self.index.remove_coordinate(l)?, self.reference.without(l))
    }

    /// Basis over the leading `k` coordinates.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        let coords: Vec<usize> = (0..k).collect();
        Self::new(self.index.prefix(k)?, self.reference.select(&coords))
    }
}

/// Convenience wrapper matching the textual operation name.
pub fn eval_features(basis: &FeatureBasis, x: &[f64]) -> Result<DVector<f64>> {
    basis.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn gram(basis: &FeatureBasis) -> DMatrix<f64> {
        let p = basis.index().degree() as usize;
        let (pts, w) = tensor_rule(basis.dim(), 2 * p + 2);
        let m = basis.len();
        let mut g = DMatrix::zeros(m, m);
        for (u, wt) in pts.iter().zip(&w) {
            let phi = basis.eval_canonical(u);
            // ρ on [-1,1]^d has density 2^{-d}.
            let scale = wt / 2f64.powi(basis.dim() as i32);
            g += &phi * phi.transpose() * scale;
        }
        g
    }

    #[test]
    fn orthonormal_up_to_degree_eight() {
        for d in 1..=3 {
            let p = if d == 3 { 5 } else { 8 };
            let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(d), p).unwrap();
            let g = gram(&basis);
            let err = (g - DMatrix::identity(basis.len(), basis.len())).amax();
            assert!(err < 1e-10, "d={d} err={err}");
        }
    }

    #[test]
    fn constant_first_and_linear_value() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(1), 3).unwrap();
        let phi = basis.eval(&[0.5]).unwrap();
        assert_eq!(phi[0], 1.0);
        assert!((phi[1] - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert_eq!(basis.constant_position(), 0);
    }

    #[test]
    fn domain_errors() {
        let basis = FeatureBasis::total_degree(ReferenceMeasure::uniform_cube(2), 2).unwrap();
        assert!(matches!(basis.eval(&[1.5, 0.0]), Err(Error::Domain(_))));
        let mapped = FeatureBasis::total_degree(ReferenceMeasure::gaussian(2), 2).unwrap();
        assert!(mapped.eval(&[30.0, -4.0]).is_ok());
        assert!(mapped.eval(&[f64::NAN, 0.0]).is_err());
    }
}
