//! Knothe–Rosenblatt maps, their composition and lazy subspace layers.

mod conditional;
mod kr;
mod lazy;

pub use conditional::{conditional_sampler, ConditionalSampler};
pub use kr::{kr_from_sos, TriangularMap};
pub use lazy::{lazy_wrap, sample_stiefel, sample_stiefel_block, LazyLayer, ORTHONORMAL_TOL};

use rayon::prelude::*;

use crate::basis::ReferenceMeasure;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, open_uniforms, Purpose};

#[derive(Debug, Clone)]
pub enum Layer {
    Full(TriangularMap),
    Lazy(LazyLayer),
}

impl Layer {
    pub fn dim(&self) -> usize {
        match self {
            Layer::Full(m) => m.dim(),
            Layer::Lazy(l) => l.dim(),
        }
    }

    pub fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            Layer::Full(m) => m.forward_with_logdet(x),
            Layer::Lazy(l) => l.forward_with_logdet(x),
        }
    }

    pub fn inverse_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            Layer::Full(m) => m.inverse_with_logdet(x),
            Layer::Lazy(l) => l.inverse_with_logdet(x),
        }
    }
}

/// Point in either the original or the canonical coordinates of the
/// shared reference, so runs of full layers skip the coordinate maps.
enum State {
    X(Vec<f64>),
    U(Vec<f64>),
}

/// `T = Q₁ ∘ Q₂ ∘ … ∘ Q_L` with a shared reference measure.
#[derive(Debug, Clone)]
pub struct ComposedMap {
    reference: ReferenceMeasure,
    layers: Vec<Layer>,
}

impl ComposedMap {
    /// The empty composition, i.e. the identity map.
    pub fn identity(reference: ReferenceMeasure) -> Self {
        Self {
            reference,
            layers: Vec::new(),
        }
    }

    pub fn new(reference: ReferenceMeasure, layers: Vec<Layer>) -> Result<Self> {
        let mut map = Self::identity(reference);
        for l in layers {
            map.push(l)?;
        }
        Ok(map)
    }

    /// Append `Q_{L+1}` so that the map becomes `T ∘ Q_{L+1}`.
    pub fn push(&mut self, layer: Layer) -> Result<()> {
        if layer.dim() != self.dim() {
            return Err(Error::Argument(format!(
                "layer dimension {} does not match map dimension {}",
                layer.dim(),
                self.dim()
            )));
        }
        match &layer {
            Layer::Full(m) if m.reference() != &self.reference => {
                return Err(Error::Argument("layer reference differs from the map's".into()))
            }
            Layer::Lazy(_) if !self.reference.is_gaussian() => {
                return Err(Error::Argument(
                    "lazy layers require a standard Gaussian reference".into(),
                ))
            }
            _ => {}
        }
        self.layers.push(layer);
        Ok(())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &ComposedMap) -> Result<Self> {
        let mut out = self.clone();
        for l in &other.layers {
            out.push(l.clone())?;
        }
        Ok(out)
    }

    pub fn reference(&self) -> &ReferenceMeasure {
        &self.reference
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    /// The first `n` layers, `Q₁ ∘ … ∘ Q_n`.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            reference: self.reference.clone(),
            layers: self.layers[..n.min(self.layers.len())].to_vec(),
        }
    }

    fn to_u(&self, state: State, logdet: &mut f64) -> Result<Vec<f64>> {
        match state {
            State::U(u) => Ok(u),
            State::X(x) => {
                *logdet += self.reference.log_jacobian(&x)?;
                self.reference.to_canonical(&x)
            }
        }
    }

    fn to_x(&self, state: State, logdet: &mut f64) -> Result<Vec<f64>> {
        match state {
            State::X(x) => Ok(x),
            State::U(u) => {
                let x = self.reference.from_canonical(&u);
                *logdet -= self.reference.log_jacobian(&x)?;
                Ok(x)
            }
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Argument(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite point {x:?}")));
        }
        Ok(())
    }

    fn inverse_state(&self, x: &[f64]) -> Result<(State, f64)> {
        self.check_point(x)?;
        let mut state = State::X(x.to_vec());
        let mut logdet = 0.0;
        for layer in &self.layers {
            state = match layer {
                Layer::Full(m) => {
                    let u = self.to_u(state, &mut logdet)?;
                    let (z, lq) = m.inverse_canonical(&u);
                    logdet += lq;
                    State::U(z)
                }
                Layer::Lazy(l) => {
                    let x = self.to_x(state, &mut logdet)?;
                    let (y, ld) = l.inverse_with_logdet(&x)?;
                    logdet += ld;
                    State::X(y)
                }
            };
        }
        Ok((state, logdet))
    }

    /// `ξ = T⁻¹(x)` and `ln |det ∇T⁻¹(x)|`.
    pub fn inverse_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (state, mut logdet) = self.inverse_state(x)?;
        let xi = self.to_x(state, &mut logdet)?;
        Ok((xi, logdet))
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse_with_logdet(x)?.0)
    }

    /// `x = T(ξ)` and `ln |det ∇T(ξ)|`.
    pub fn forward_with_logdet(&self, xi: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_point(xi)?;
        let mut state = State::X(xi.to_vec());
        let mut logdet = 0.0;
        for layer in self.layers.iter().rev() {
            state = match layer {
                Layer::Full(m) => {
                    let z = self.to_u(state, &mut logdet)?;
                    let (u, lq) = m.forward_canonical(&z)?;
                    logdet -= lq;
                    State::U(u)
                }
                Layer::Lazy(l) => {
                    let x = self.to_x(state, &mut logdet)?;
                    let (y, ld) = l.forward_with_logdet(&x)?;
                    logdet += ld;
                    State::X(y)
                }
            };
        }
        let x = self.to_x(state, &mut logdet)?;
        Ok((x, logdet))
    }

    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_logdet(xi)?.0)
    }

    /// `ln T_♯ρ(x) = ln ρ(T⁻¹x) + ln |det ∇T⁻¹(x)|`.
    pub fn pushforward_logpdf(&self, x: &[f64]) -> Result<f64> {
        let (state, logdet) = self.inverse_state(x)?;
        Ok(match state {
            // ln ρ(ξ) - ln|R'(ξ)| is the canonical density 2^{-d}.
            State::U(_) => logdet - self.dim() as f64 * std::f64::consts::LN_2,
            State::X(xi) => self.reference.log_density(&xi)? + logdet,
        })
    }

    /// `ln T^♯π(ξ) = ln π(T ξ) + ln |det ∇T(ξ)|`.
    pub fn pullback_logpdf<F: Fn(&[f64]) -> f64>(&self, target_logpdf: F, xi: &[f64]) -> Result<f64> {
        let (x, ld) = self.forward_with_logdet(xi)?;
        Ok(target_logpdf(&x) + ld)
    }

    pub fn pushforward_logpdf_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.pushforward_logpdf(x)).collect()
    }

    pub fn inverse_batch(&self, xs: &[Vec<f64>]) -> Vec<Result<(Vec<f64>, f64)>> {
        xs.par_iter().map(|x| self.inverse_with_logdet(x)).collect()
    }

    pub fn forward_batch(&self, xis: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
        xis.par_iter().map(|x| self.forward_with_logdet(x)).collect()
    }

    /// `n` reference draws by per-coordinate inverse CDF, one counter-based
    /// stream per point.
    pub fn sample_reference(reference: &ReferenceMeasure, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let s = derive_seed(seed, Purpose::Reference, 0);
        (0..n)
            .into_par_iter()
            .map(|i| {
                open_uniforms(s, i as u64, reference.dim())
                    .into_iter()
                    .enumerate()
                    .map(|(k, p)| reference.map(k).inverse_cdf(p))
                    .collect()
            })
            .collect()
    }

    /// `n` draws from `T_♯ρ`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::Argument("sample count must be positive".into()));
        }
        let xi = Self::sample_reference(&self.reference, n, seed)?;
        xi.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Map on the leading `k` coordinates implied by block-triangular layers.
    pub fn restrict_prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::Argument(format!("invalid prefix length {k}")));
        }
        let reference = self.reference.select(&(0..k).collect::<Vec<_>>());
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            match l {
                Layer::Full(m) => layers.push(Layer::Full(m.restrict_prefix(k)?)),
                Layer::Lazy(lz) => {
                    if let Some(r) = lz.restrict_prefix(k)? {
                        layers.push(Layer::Lazy(r));
                    }
                }
            }
        }
        Self::new(reference, layers)
    }
}

/// Reference sample helper with the library's seeding convention.
pub fn sample_reference(reference: &ReferenceMeasure, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    ComposedMap::sample_reference(reference, n, seed)
}
