use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;

/// Independent per-dimension Gaussian exploration noise with
/// multiplicative per-episode decay.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcess {
    sigma: Vec<f64>,
    decay: f64,
    sigma_min: f64,
}

impl NoiseProcess {
    pub fn new(dim: usize, sigma0: f64, decay: f64, sigma_min: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma0 >= sigma_min && (0.0..=1.0).contains(&decay)) {
            return Err(Error::Config(format!(
                "noise needs sigma0 >= sigma_min > 0 and decay in [0, 1], got {sigma0}, {sigma_min}, {decay}"
            )));
        }
        Ok(NoiseProcess {
            sigma: vec![sigma0; dim],
            decay,
            sigma_min,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sigma
            .iter()
            .map(|&s| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
            .collect()
    }

    pub fn end_episode(&mut self) {
        for s in &mut self.sigma {
            *s = (*s * self.decay).max(self.sigma_min);
        }
    }

    /// Widens the per-dimension scale vector along with the action space.
    pub fn extend(&mut self, map: &MappingMatrix) -> Result<()> {
        self.sigma = map.lift(&self.sigma)?;
        Ok(())
    }

    pub(crate) fn from_parts(sigma: Vec<f64>, decay: f64, sigma_min: f64) -> Self {
        NoiseProcess {
            sigma,
            decay,
            sigma_min,
        }
    }

    pub(crate) fn parts(&self) -> (f64, f64) {
        (self.decay, self.sigma_min)
    }
}
