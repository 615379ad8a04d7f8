//! Product reference measures and their coordinate maps.
//!
//! Each coordinate carries a monotone map `R` from its domain onto the
//! canonical interval `[-1, 1]`. The reference density is the pullback of the
//! uniform probability density `1/2` under `R`, so `ρ_k(x) = |R'(x)| / 2`.

use std::f64::consts::{LN_2, SQRT_2};

use statrs::function::erf::{erf, erfc, erfc_inv};

use crate::error::{Error, Result};

/// Canonical coordinates produced internally are kept this far inside the
/// open interval so tails never map to infinite values.
const EDGE: f64 = f64::EPSILON;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// Bounded coordinate already living on `[-1, 1]`.
    Identity,
    /// `tanh`, with inverse `atanh`.
    Logarithmic,
    /// `x / √(1+x²)`, with inverse `u / √(1-u²)`.
    Algebraic,
    /// `2Φ(x) - 1` where `Φ` is the standard normal CDF.
    Probit,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Identity => "identity",
            MapKind::Logarithmic => "logarithmic",
            MapKind::Algebraic => "algebraic",
            MapKind::Probit => "probit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(MapKind::Identity),
            "logarithmic" => Ok(MapKind::Logarithmic),
            "algebraic" => Ok(MapKind::Algebraic),
            "probit" => Ok(MapKind::Probit),
            other => Err(Error::Argument(format!("unknown map kind `{other}`"))),
        }
    }

    /// Map from the coordinate domain to `[-1, 1]`.
    pub fn forward(self, x: f64) -> Result<f64> {
        match self {
            MapKind::Identity if !(x.abs() <= 1.0) => {
                Err(Error::Domain(format!("{x} is outside [-1, 1]")))
            }
            _ if !x.is_finite() => Err(Error::Domain(format!("{x} is not finite"))),
            _ => Ok(self.forward_unchecked(x)),
        }
    }

    fn forward_unchecked(self, x: f64) -> f64 {
        match self {
            MapKind::Identity => x,
            MapKind::Logarithmic => x.tanh(),
            MapKind::Algebraic => x / (1.0 + x * x).sqrt(),
            MapKind::Probit => {
                if x.abs() < 1.0 {
                    erf(x / SQRT_2)
                } else if x > 0.0 {
                    1.0 - erfc(x / SQRT_2)
                } else {
                    erfc(-x / SQRT_2) - 1.0
                }
            }
        }
    }

    /// Map from `[-1, 1]` back to the coordinate domain.
    pub fn inverse(self, u: f64) -> Result<f64> {
        match self {
            MapKind::Identity if !(u.abs() <= 1.0) => {
                Err(Error::Domain(format!("{u} is outside [-1, 1]")))
            }
            MapKind::Identity => Ok(u),
            _ if !(u.abs() < 1.0) => Err(Error::Domain(format!("{u} is outside (-1, 1)"))),
            _ => Ok(self.inverse_unchecked(u)),
        }
    }

    fn inverse_unchecked(self, u: f64) -> f64 {
        match self {
            MapKind::Identity => u,
            MapKind::Logarithmic => u.atanh(),
            MapKind::Algebraic => u / ((1.0 - u) * (1.0 + u)).sqrt(),
            MapKind::Probit => {
                if u < 0.0 {
                    lower_quantile(0.5 * (1.0 + u))
                } else {
                    -lower_quantile(0.5 * (1.0 - u))
                }
            }
        }
    }

    /// `ln |R'(x)|`.
    pub fn log_jacobian(self, x: f64) -> Result<f64> {
        self.forward(x)?;
        Ok(self.log_jacobian_unchecked(x))
    }

    fn log_jacobian_unchecked(self, x: f64) -> f64 {
        match self {
            MapKind::Identity => 0.0,
            MapKind::Logarithmic => {
                let a = x.abs();
                2.0 * LN_2 - 2.0 * a - 2.0 * (-2.0 * a).exp().ln_1p()
            }
            MapKind::Algebraic => -1.5 * (x * x).ln_1p(),
            MapKind::Probit => LN_2 - 0.5 * x * x - HALF_LN_2PI,
        }
    }

    /// `ln |(R⁻¹)'(u)|`.
    pub fn inverse_log_jacobian(self, u: f64) -> Result<f64> {
        let x = self.inverse(u)?;
        Ok(match self {
            MapKind::Identity => 0.0,
            MapKind::Logarithmic => -((1.0 - u) * (1.0 + u)).ln(),
            MapKind::Algebraic => -1.5 * ((1.0 - u) * (1.0 + u)).ln(),
            MapKind::Probit => -self.log_jacobian_unchecked(x),
        })
    }

    /// Forward map for internal use: never fails on finite input for
    /// unbounded kinds, and keeps the image inside the open interval.
    pub(crate) fn to_canonical(self, x: f64) -> Result<f64> {
        let u = self.forward(x)?;
        Ok(match self {
            MapKind::Identity => u,
            _ => u.clamp(-1.0 + EDGE, 1.0 - EDGE),
        })
    }

    /// Inverse map for internal use; saturates at the interval edges.
    pub(crate) fn from_canonical(self, u: f64) -> f64 {
        match self {
            MapKind::Identity => u.clamp(-1.0, 1.0),
            _ => self.inverse_unchecked(u.clamp(-1.0 + EDGE, 1.0 - EDGE)),
        }
    }

    /// `ln ρ_k(x)`, the log of the coordinate reference density.
    pub fn log_density(self, x: f64) -> Result<f64> {
        Ok(-LN_2 + self.log_jacobian(x)?)
    }

    pub fn cdf(self, x: f64) -> Result<f64> {
        match self {
            MapKind::Probit => {
                if !x.is_finite() {
                    return Err(Error::Domain(format!("{x} is not finite")));
                }
                Ok(0.5 * erfc(-x / SQRT_2))
            }
            _ => Ok(0.5 * (self.forward(x)? + 1.0)),
        }
    }

    pub fn inverse_cdf(self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        match self {
            MapKind::Probit => {
                if p <= 0.0 || p >= 1.0 {
                    return Err(Error::Domain(format!("probability {p} maps to infinity")));
                }
                Ok(if p <= 0.5 {
                    lower_quantile(p)
                } else {
                    -lower_quantile(1.0 - p)
                })
            }
            MapKind::Identity => Ok(2.0 * p - 1.0),
            _ => self.inverse(2.0 * p - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    UniformCube,
    Mapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `R(x)`.
    Forward,
    /// `R⁻¹(u)`.
    Inverse,
    /// `ln |R'(x)|`.
    LogJacobian,
    /// `ln |(R⁻¹)'(u)|`.
    InverseLogJacobian,
}

/// A product probability measure on `𝒳 = 𝒳_1 × … × 𝒳_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMeasure {
    kind: MeasureKind,
    maps: Vec<MapKind>,
}

impl ReferenceMeasure {
    /// Uniform probability measure on `[-1, 1]^d`.
    pub fn uniform_cube(d: usize) -> Self {
        Self {
            kind: MeasureKind::UniformCube,
            maps: vec![MapKind::Identity; d],
        }
    }

    /// Standard Gaussian on `ℝ^d` (probit map on every coordinate).
    pub fn gaussian(d: usize) -> Self {
        Self::mapped(vec![MapKind::Probit; d])
    }

    pub fn mapped(maps: Vec<MapKind>) -> Self {
        let kind = if maps.iter().all(|m| *m == MapKind::Identity) {
            MeasureKind::UniformCube
        } else {
            MeasureKind::Mapped
        };
        Self { kind, maps }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[MapKind] {
        &self.maps
    }

    pub fn map(&self, k: usize) -> MapKind {
        self.maps[k]
    }

    pub fn is_gaussian(&self) -> bool {
        self.maps.iter().all(|m| *m == MapKind::Probit)
    }

    /// Evaluate one of the coordinate transforms of coordinate `k`.
    pub fn transform(&self, k: usize, direction: Direction, value: f64) -> Result<f64> {
        let map = *self
            .maps
            .get(k)
            .ok_or_else(|| Error::Argument(format!("coordinate {k} out of range")))?;
        match direction {
            Direction::Forward => map.forward(value),
            Direction::Inverse => map.inverse(value),
            Direction::LogJacobian => map.log_jacobian(value),
            Direction::InverseLogJacobian => map.inverse_log_jacobian(value),
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Argument(format!(
                "point has dimension {len}, expected {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Canonical coordinates `u = R(x)`.
    pub fn to_canonical(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        x.iter()
            .zip(&self.maps)
            .map(|(v, m)| m.to_canonical(*v))
            .collect()
    }

    pub fn from_canonical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.maps)
            .map(|(v, m)| m.from_canonical(*v))
            .collect()
    }

    /// `Σ_k ln |R_k'(x_k)|`.
    pub fn log_jacobian(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut s = 0.0;
        for (v, m) in x.iter().zip(&self.maps) {
            s += m.log_jacobian(*v)?;
        }
        Ok(s)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_jacobian(x)? - self.dim() as f64 * LN_2)
    }

    /// Restriction of the measure to the listed coordinates.
    pub fn select(&self, coords: &[usize]) -> Self {
        Self::mapped(coords.iter().map(|&k| self.maps[k]).collect())
    }

    pub fn without(&self, l: usize) -> Self {
        let coords: Vec<usize> = (0..self.dim()).filter(|&k| k != l).collect();
        self.select(&coords)
    }
}

/// Standard normal quantile for `p ∈ (0, 1/2]`, polished with Newton steps
/// because the series inverse alone is only accurate to about 1e-10.
fn lower_quantile(p: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let f = 0.5 * erfc(-x / SQRT_2) - p;
        let dens = std_normal_log_pdf(x).exp();
        if dens <= 0.0 {
            break;
        }
        x -= f / dens;
    }
    x
}

/// Density of the standard normal distribution in log form.
pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - HALF_LN_2PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::quadrature::GaussLegendre;

    #[test]
    fn table_values() {
        let m = ReferenceMeasure::mapped(vec![MapKind::Logarithmic, MapKind::Algebraic]);
        assert_eq!(m.transform(0, Direction::Forward, 0.0).unwrap(), 0.0);
        let j = m.transform(0, Direction::InverseLogJacobian, 0.0).unwrap();
        assert!((j.exp() - 1.0).abs() < 1e-15);
        let a = m.transform(1, Direction::Forward, 1.0).unwrap();
        assert!((a - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(m.transform(0, Direction::Inverse, 1.0).is_err());
        assert!(m.transform(1, Direction::Inverse, -1.5).is_err());
    }

    #[test]
    fn roundtrips() {
        for kind in [MapKind::Algebraic, MapKind::Probit] {
            for i in 0..=200 {
                let x = -10.0 + 0.1 * i as f64;
                if kind == MapKind::Probit && x.abs() > 3.0 {
                    continue;
                }
                let back = kind.inverse(kind.forward(x).unwrap()).unwrap();
                assert!((back - x).abs() <= 1e-12 * (1.0 + x.abs()), "{kind:?} {x} {back}");
            }
        }
        for kind in [MapKind::Logarithmic, MapKind::Algebraic, MapKind::Probit] {
            for i in 1..200 {
                let u = -1.0 + 0.01 * i as f64;
                let back = kind.forward(kind.inverse(u).unwrap()).unwrap();
                assert!((back - u).abs() <= 1e-12, "{kind:?} {u} {back}");
            }
        }
    }

    #[test]
    fn logarithmic_roundtrip_is_limited_by_conditioning() {
        let kind = MapKind::Logarithmic;
        for i in 0..=200 {
            let x = -10.0 + 0.1 * i as f64;
            let u = kind.forward(x).unwrap();
            let back = kind.inverse(u).unwrap();
            // The image spacing near ±1 is ε, amplified by 1/(1-u²).
            let cond = (1.0 / ((1.0 - u.abs()) * (1.0 + u.abs()))).max(1.0);
            assert!((back - x).abs() <= 1e-12 * (1.0 + x.abs()) * cond, "{x} {back}");
            if x.abs() <= 3.0 {
                assert!((back - x).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        for kind in [MapKind::Logarithmic, MapKind::Algebraic, MapKind::Probit] {
            for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
                let h = 1e-6;
                let fd = (kind.forward(x + h).unwrap() - kind.forward(x - h).unwrap()) / (2.0 * h);
                let j = kind.log_jacobian(x).unwrap().exp();
                assert!((fd - j).abs() < 1e-8 * (1.0 + j), "{kind:?} {x}");
                let u = kind.forward(x).unwrap();
                let ij = kind.inverse_log_jacobian(u).unwrap();
                assert!((ij + kind.log_jacobian(x).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coordinate_densities_integrate_to_one() {
        let gl = GaussLegendre::new(200);
        for kind in [
            MapKind::Identity,
            MapKind::Logarithmic,
            MapKind::Algebraic,
            MapKind::Probit,
        ] {
            // Substitute x = R⁻¹(u) so the integral runs over [-1, 1].
            let total = gl.integrate(-1.0, 1.0, |u| {
                let x = kind.from_canonical(u);
                (kind.log_density(x).unwrap() + kind.inverse_log_jacobian(u).unwrap()).exp()
            });
            assert!((total - 1.0).abs() < 1e-10, "{kind:?} {total}");
        }
    }

    #[test]
    fn probit_reference_is_standard_normal() {
        for x in [-2.0, 0.0, 1.3] {
            let lp = MapKind::Probit.log_density(x).unwrap();
            assert!((lp - std_normal_log_pdf(x)).abs() < 1e-14);
        }
        let p = MapKind::Probit.cdf(1.0).unwrap();
        assert!((MapKind::Probit.inverse_cdf(p).unwrap() - 1.0).abs() < 1e-12);
    }
}
