use nalgebra::{DMatrix, DVector};

use super::kr::TriangularMap;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, standard_normals, Purpose};

/// Orthonormality tolerance for lazy subspaces.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// A map acting on `range(U)` and as the identity on its complement,
/// `Q(x) = U Q̃(Uᵀx) + (I - UUᵀ) x`.
#[derive(Debug, Clone)]
pub struct LazyLayer {
    u: DMatrix<f64>,
    inner: TriangularMap,
}

impl LazyLayer {
    pub fn new(u: DMatrix<f64>, inner: TriangularMap) -> Result<Self> {
        if u.ncols() != inner.dim() || u.ncols() > u.nrows() {
            return Err(Error::Argument(format!(
                "subspace basis is {}×{}, inner map has dimension {}",
                u.nrows(),
                u.ncols(),
                inner.dim()
            )));
        }
        let gram = u.transpose() * &u;
        let err = (gram - DMatrix::identity(u.ncols(), u.ncols())).amax();
        if err > ORTHONORMAL_TOL {
            return Err(Error::Argument(format!(
                "subspace columns are not orthonormal (error {err:e})"
            )));
        }
        if !inner.reference().is_gaussian() {
            return Err(Error::Argument(
                "lazy layers require a standard Gaussian reference".into(),
            ));
        }
        Ok(Self { u, inner })
    }

    pub fn subspace(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn inner(&self) -> &TriangularMap {
        &self.inner
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let v = self.u.transpose() * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    fn lift(&self, x: &[f64], from: &[f64], to: &[f64]) -> Vec<f64> {
        let delta: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
        let shift = &self.u * DVector::from_column_slice(&delta);
        x.iter().zip(shift.iter()).map(|(a, b)| a + b).collect()
    }

    pub fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = self.project(x);
        let (y, ld) = self.inner.forward_with_logdet(&z)?;
        Ok((self.lift(x, &z, &y), ld))
    }

    pub fn inverse_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = self.project(x);
        let (w, ld) = self.inner.inverse_with_logdet(&z)?;
        Ok((self.lift(x, &z, &w), ld))
    }

    /// Split of the columns into a leading block supported on the first `k`
    /// rows and a trailing block supported on the rest.
    pub fn prefix_rank(&self, k: usize) -> Result<usize> {
        let tol = 1e-14;
        let r = self.rank();
        let mut ry = 0;
        while ry < r && (k..self.dim()).all(|i| self.u[(i, ry)].abs() <= tol) {
            ry += 1;
        }
        for j in ry..r {
            if (0..k).any(|i| self.u[(i, j)].abs() > tol) {
                return Err(Error::Argument(format!(
                    "lazy layer is not block triangular at split {k}"
                )));
            }
        }
        Ok(ry)
    }

    /// Restriction to the first `k` coordinates; `None` when the layer
    /// does not act on them.
    pub fn restrict_prefix(&self, k: usize) -> Result<Option<Self>> {
        let ry = self.prefix_rank(k)?;
        if ry == 0 {
            return Ok(None);
        }
        let u = self.u.view((0, 0), (k, ry)).into_owned();
        Ok(Some(Self::new(u, self.inner.restrict_prefix(ry)?)?))
    }
}

/// Wraps an inner map on `ℝ^r` as a lazy layer on `ℝ^d`.
pub fn lazy_wrap(u: DMatrix<f64>, inner: TriangularMap) -> Result<LazyLayer> {
    LazyLayer::new(u, inner)
}

/// A `d × r` matrix with orthonormal columns, uniformly distributed on the
/// Stiefel manifold.
pub fn sample_stiefel(d: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if r == 0 || r > d {
        return Err(Error::Argument(format!("need 1 ≤ r ≤ d, got r={r}, d={d}")));
    }
    let s = derive_seed(seed, Purpose::Stiefel, 0);
    let g = DMatrix::from_fn(d, r, |i, j| standard_normals(s, (j * d + i) as u64, 1)[0]);
    let qr = g.qr();
    let mut q = qr.q();
    let rm = qr.r();
    for j in 0..r {
        if rm[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // One Gram-Schmidt pass tightens orthonormality to rounding level.
    for j in 0..r {
        for k in 0..j {
            let dot = q.column(j).dot(&q.column(k));
            let ck = q.column(k).into_owned();
            q.column_mut(j).axpy(-dot, &ck, 1.0);
        }
        let n = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / n);
    }
    Ok(q)
}

/// Block-diagonal Stiefel sample: block `b` maps `blocks[b].0` coordinates
/// to `blocks[b].1` subspace directions.
pub fn sample_stiefel_block(blocks: &[(usize, usize)], seed: u64) -> Result<DMatrix<f64>> {
    let d: usize = blocks.iter().map(|b| b.0).sum();
    let r: usize = blocks.iter().map(|b| b.1).sum();
    let mut u = DMatrix::zeros(d, r);
    let (mut row, mut col) = (0, 0);
    for (b, &(db, rb)) in blocks.iter().enumerate() {
        if rb > 0 {
            let ub = sample_stiefel(db, rb, derive_seed(seed, Purpose::Stiefel, b as u64 + 1))?;
            u.view_mut((row, col), (db, rb)).copy_from(&ub);
        }
        row += db;
        col += rb;
    }
    Ok(u)
}
