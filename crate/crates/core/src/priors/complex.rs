use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PriorError, ScalarPrior, VARIANCE_FLOOR};
use crate::rng::{substream, tag};

/// Denoiser for complex entries. Variances are per real dimension, so a
/// circular Gaussian with `E|x|^2 = 2 s` has variance `s`.
pub trait ComplexDenoiser: Send + Sync {
    fn denoise(&self, r: Complex64, sigma2: f64) -> (Complex64, f64);
    /// Prior mean and per-dimension variance.
    fn moments(&self) -> (Complex64, f64);
}

/// Jointly sparse complex prior: `x = 0` with probability `1 - rho`, else
/// `mean + sqrt(sigma2) (z1 + i z2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexBernoulliGauss {
    pub rho: f64,
    pub mean: Complex64,
    pub sigma2: f64,
}

impl ComplexBernoulliGauss {
    pub fn new(rho: f64, mean: Complex64, sigma2: f64) -> Result<Self, PriorError> {
        if !(0.0..=1.0).contains(&rho) || !(sigma2 > 0.0) || !mean.re.is_finite() || !mean.im.is_finite() {
            return Err(PriorError::InvalidParameter("complex bernoulli-gauss parameters".into()));
        }
        Ok(Self { rho, mean, sigma2 })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = substream(seed, &[tag::SIGNAL]);
        let s = self.sigma2.sqrt();
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.rho {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    self.mean + Complex64::new(s * a, s * b)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

impl ComplexDenoiser for ComplexBernoulliGauss {
    fn denoise(&self, r: Complex64, s2: f64) -> (Complex64, f64) {
        let sg = self.sigma2;
        let m = (r * sg + self.mean * s2) / (s2 + sg);
        let chi2 = s2 * sg / (s2 + sg);
        // log of the two terms of the normalization, g written in its
        // reduced form exp(-|R - mean|^2 / (2 (sigma2 + Sigma2)))
        let ln_g = -(r - self.mean).norm_sqr() / (2.0 * (sg + s2));
        let l1 = if self.rho > 0.0 { (self.rho * chi2).ln() + ln_g } else { f64::NEG_INFINITY };
        let l0 = if self.rho < 1.0 {
            (sg * (1.0 - self.rho)).ln() - r.norm_sqr() / (2.0 * s2)
        } else {
            f64::NEG_INFINITY
        };
        let top = l0.max(l1);
        let p1 = (l1 - top).exp() / ((l0 - top).exp() + (l1 - top).exp());
        let a = m * p1;
        let second = p1 * (m.norm_sqr() + 2.0 * chi2);
        (a, (0.5 * (second - a.norm_sqr())).max(VARIANCE_FLOOR))
    }

    fn moments(&self) -> (Complex64, f64) {
        let mean = self.mean * self.rho;
        let second = self.rho * (self.mean.norm_sqr() + 2.0 * self.sigma2);
        (mean, 0.5 * (second - mean.norm_sqr()))
    }
}

/// Applies a real scalar prior to the real part and pins the imaginary part
/// to zero, so that real problems can run through the complex solver.
#[derive(Debug, Clone)]
pub struct RealPart<P>(pub P);

impl<P: ScalarPrior> ComplexDenoiser for RealPart<P> {
    fn denoise(&self, r: Complex64, sigma2: f64) -> (Complex64, f64) {
        let (a, c) = self.0.denoise(r.re, sigma2);
        (Complex64::new(a, 0.0), c)
    }
    fn moments(&self) -> (Complex64, f64) {
        (Complex64::new(self.0.mean(), 0.0), self.0.variance())
    }
}
