use rayon::prelude::*;

use super::ComposedMap;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, open_uniforms, Purpose};

/// Sampler and density of `x | y` extracted from a block-triangular map
/// whose leading `dim(y)` coordinates form the conditioning block.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    joint: ComposedMap,
    y: Vec<f64>,
    xi_y: Vec<f64>,
    log_marginal: f64,
}

impl ConditionalSampler {
    pub fn new(joint: &ComposedMap, y: &[f64]) -> Result<Self> {
        let dy = y.len();
        if dy == 0 || dy >= joint.dim() {
            return Err(Error::Argument(format!(
                "conditioning block of size {dy} in dimension {}",
                joint.dim()
            )));
        }
        let marginal = joint.restrict_prefix(dy)?;
        let xi_y = marginal.inverse(y)?;
        let log_marginal = marginal.pushforward_logpdf(y)?;
        Ok(Self {
            joint: joint.clone(),
            y: y.to_vec(),
            xi_y,
            log_marginal,
        })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dim_x(&self) -> usize {
        self.joint.dim() - self.y.len()
    }

    pub fn marginal_logpdf(&self) -> f64 {
        self.log_marginal
    }

    /// `ln π̃(x | y) = ln π̃(y, x) - ln π̃(y)`.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let mut full = self.y.clone();
        full.extend_from_slice(x);
        Ok(self.joint.pushforward_logpdf(&full)? - self.log_marginal)
    }

    /// Push `ξ_x` through the joint map with `ξ_y = T_y⁻¹(y)` held fixed.
    pub fn transport(&self, xi_x: &[f64]) -> Result<Vec<f64>> {
        let mut xi = self.xi_y.clone();
        xi.extend_from_slice(xi_x);
        let z = self.joint.forward(&xi)?;
        Ok(z[self.y.len()..].to_vec())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let dy = self.y.len();
        let dx = self.dim_x();
        let reference = self.joint.reference();
        let s = derive_seed(seed, Purpose::Reference, 1);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let xi: Vec<f64> = open_uniforms(s, i as u64, dx)
                    .into_iter()
                    .enumerate()
                    .map(|(k, p)| reference.map(dy + k).inverse_cdf(p))
                    .collect::<Result<_>>()?;
                self.transport(&xi)
            })
            .collect()
    }
}

pub fn conditional_sampler(map: &ComposedMap, y: &[f64]) -> Result<ConditionalSampler> {
    ConditionalSampler::new(map, y)
}
