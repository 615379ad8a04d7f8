use crate::basis::{FeatureBasis, ReferenceMeasure};
use crate::error::{Error, Result};
use crate::sos::SosDensity;

/// Knothe–Rosenblatt map pushing the reference measure onto a normalized
/// SoS density.
///
/// Internally the map is evaluated in canonical coordinates, where the
/// reference is uniform on `[-1, 1]^d` and every conditional CDF is a
/// polynomial.
#[derive(Debug, Clone)]
pub struct TriangularMap {
    density: SosDensity,
}

impl TriangularMap {
    pub fn from_sos(density: &SosDensity) -> Result<Self> {
        Ok(Self {
            density: density.to_normalized()?,
        })
    }

    /// Map built from the constant feature only, which is the identity.
    pub fn identity(basis: FeatureBasis) -> Result<Self> {
        Ok(Self {
            density: SosDensity::reference(basis)?,
        })
    }

    pub fn density(&self) -> &SosDensity {
        &self.density
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn reference(&self) -> &ReferenceMeasure {
        self.density.basis().reference()
    }

    /// `u = Q̃(z)` together with `ln q̂(u) = -ln det ∇Q̃(z)`.
    pub fn forward_canonical(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let d = self.dim();
        let mut u = Vec::with_capacity(d);
        let mut log_q = 0.0;
        for (i, &zi) in z.iter().enumerate().take(d) {
            let form = self.density.conditional_form(i, &u);
            let p = (0.5 * (zi + 1.0)).clamp(0.0, 1.0);
            let ui = form.inverse_cdf(p).map_err(|e| {
                Error::Numeric(format!("coordinate {i} of {z:?}: {e}"))
            })?;
            log_q += (2.0 * form.pdf(ui)).ln();
            u.push(ui);
        }
        Ok((u, log_q))
    }

    /// `z = Q̃⁻¹(u)` together with `ln q̂(u) = ln det ∇Q̃⁻¹(u)`.
    pub fn inverse_canonical(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim();
        let mut z = Vec::with_capacity(d);
        let mut log_q = 0.0;
        for i in 0..d {
            let form = self.density.conditional_form(i, &u[..i]);
            z.push(2.0 * form.cdf(u[i]) - 1.0);
            log_q += (2.0 * form.pdf(u[i])).ln();
        }
        (z, log_q)
    }

    /// `x = Q(ξ)` and `ln |det ∇Q(ξ)|`.
    pub fn forward_with_logdet(&self, xi: &[f64]) -> Result<(Vec<f64>, f64)> {
        let r = self.reference();
        let z = r.to_canonical(xi)?;
        let (u, log_q) = self.forward_canonical(&z)?;
        let x = r.from_canonical(&u);
        let ld = r.log_jacobian(xi)? - log_q - r.log_jacobian(&x)?;
        Ok((x, ld))
    }

    /// `ξ = Q⁻¹(x)` and `ln |det ∇Q⁻¹(x)|`.
    pub fn inverse_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let r = self.reference();
        let u = r.to_canonical(x)?;
        let (z, log_q) = self.inverse_canonical(&u);
        let xi = r.from_canonical(&z);
        let ld = r.log_jacobian(x)? + log_q - r.log_jacobian(&xi)?;
        Ok((xi, ld))
    }

    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_logdet(xi)?.0)
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse_with_logdet(x)?.0)
    }

    /// Map on the leading `k` coordinates, which are untouched by the rest.
    pub fn restrict_prefix(&self, k: usize) -> Result<Self> {
        Ok(Self {
            density: self.density.prefix_marginal(k)?,
        })
    }
}

/// Builds the KR map of a SoS density (normalizing it if needed).
pub fn kr_from_sos(density: &SosDensity) -> Result<TriangularMap> {
    TriangularMap::from_sos(density)
}
