//! Priors and their posterior-moment denoisers.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod complex;
pub mod mixture;
pub mod section;

pub use complex::{ComplexBernoulliGauss, ComplexDenoiser, RealPart};
pub use mixture::{denoise_bigaussian, BiGaussian, MixtureComponent, MixturePrior};
pub use section::SectionPrior;

/// Lower bound applied to every posterior variance.
pub const VARIANCE_FLOOR: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("prior has no component with positive weight")]
    Empty,
    #[error("invalid prior parameter: {0}")]
    InvalidParameter(String),
}

/// Separable scalar prior `P0(x)` with its Gaussian-channel denoiser.
pub trait ScalarPrior: Send + Sync {
    /// Posterior mean and variance of `x` given `R = x + N(0, sigma2)`.
    fn denoise(&self, r: f64, sigma2: f64) -> (f64, f64);
    /// `ln int P0(x) N(x | r, sigma2) dx`.
    fn log_evidence(&self, r: f64, sigma2: f64) -> f64;
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;
    fn second_moment(&self) -> f64 {
        self.variance() + self.mean() * self.mean()
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64;

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::substream(seed, &[crate::rng::tag::SIGNAL]);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }
}

/// Vector denoiser used by the AMP solvers.
pub trait Denoiser: Send + Sync {
    /// Writes the posterior means and variances for fields `(r, sigma2)`.
    fn denoise_into(&self, r: &[f64], sigma2: &[f64], a: &mut [f64], v: &mut [f64]);
    /// Prior means and variances, the AMP starting point.
    fn init(&self, n: usize) -> (Vec<f64>, Vec<f64>);
    /// `sum ln int P0(x) prod_i N(x_i | r_i, sigma2_i) dx` over all factors.
    fn log_evidence_sum(&self, r: &[f64], sigma2: &[f64]) -> f64;
}

macro_rules! elementwise_denoiser {
    ($t:ty) => {
        impl Denoiser for $t {
            fn denoise_into(&self, r: &[f64], sigma2: &[f64], a: &mut [f64], v: &mut [f64]) {
                for i in 0..r.len() {
                    let (ai, vi) = ScalarPrior::denoise(self, r[i], sigma2[i]);
                    a[i] = ai;
                    v[i] = vi;
                }
            }
            fn init(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
                (vec![self.mean(); n], vec![self.variance().max(VARIANCE_FLOOR); n])
            }
            fn log_evidence_sum(&self, r: &[f64], sigma2: &[f64]) -> f64 {
                r.iter().zip(sigma2).map(|(&ri, &si)| self.log_evidence(ri, si)).sum()
            }
        }
    };
}
elementwise_denoiser!(MixturePrior);
elementwise_denoiser!(BiGaussian);

/// JSON form of a prior: `{"components": [...]}` or `{"section": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Mixture { components: Vec<MixtureComponent> },
    Section { section: SectionSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub groups: Option<Vec<f64>>,
}

impl PriorSpec {
    pub fn to_mixture(&self) -> Result<MixturePrior, PriorError> {
        match self {
            PriorSpec::Mixture { components } => MixturePrior::new(components.clone()),
            PriorSpec::Section { .. } => Err(PriorError::InvalidParameter("not a mixture prior".into())),
        }
    }

    pub fn to_section(&self) -> Result<SectionPrior, PriorError> {
        match self {
            PriorSpec::Section { section } => match (&section.groups, section.c) {
                (Some(g), _) => SectionPrior::with_powers(section.b, g.clone()),
                (None, c) => SectionPrior::with_powers(section.b, vec![c.unwrap_or(1.0)]),
            },
            PriorSpec::Mixture { .. } => Err(PriorError::InvalidParameter("not a section prior".into())),
        }
    }
}
