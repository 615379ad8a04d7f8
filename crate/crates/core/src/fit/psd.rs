use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nearest positive semidefinite matrix in Frobenius norm.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(psd_project_with_eigenvalues(m)?.0)
}

/// Projection together with the clipped eigenvalues.
pub fn psd_project_with_eigenvalues(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !m.is_square() {
        return Err(Error::Argument("projection needs a square matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lam) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam);
    }
    let out = scaled * v.transpose();
    Ok(((&out + out.transpose()) * 0.5, vals))
}
