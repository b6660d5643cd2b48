use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CodeError;
use crate::amp::{run_amp, AmpConfig};
use crate::operators::{gen_iid_gaussian, LinearOperator};
use crate::potential::{find_transitions, BiGaussianFamily, Easy};
use crate::priors::BiGaussian;
use crate::rng::{substream, tag};
use crate::state_evolution::BiGaussianSe;

/// Encoding rate above which l1 decoding succeeds at `rho = 0.1` without
/// background noise. Reference value only; it is not computed here.
pub const GAMMA_DT: f64 = 1.490;

/// Each entry receives `N(0, eps)` background noise, plus with probability
/// `rho` an extra `N(0, 1)` gross error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrossErrorChannel {
    pub rho: f64,
    pub eps: f64,
}

impl GrossErrorChannel {
    pub fn validate(&self) -> Result<(), CodeError> {
        if !(0.0..1.0).contains(&self.rho) || !(self.eps >= 0.0) {
            return Err(CodeError::InvalidSpec("need 0 <= rho < 1 and eps >= 0".into()));
        }
        Ok(())
    }

    /// Error prior `rho N(0, 1 + eps) + (1 - rho) N(0, eps)`.
    pub fn prior(&self) -> BiGaussian {
        BiGaussian { rho: self.rho, sigma1sq: 1.0 + self.eps, sigma2sq: self.eps }
    }

    /// Background and gross parts of the error, drawn separately.
    pub fn sample(&self, m: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = substream(seed, &[tag::CHANNEL]);
        let sd = self.eps.sqrt();
        let mut small = Vec::with_capacity(m);
        let mut gross = Vec::with_capacity(m);
        for _ in 0..m {
            small.push(sd * rng.sample::<f64, _>(StandardNormal));
            let hit = rng.random::<f64>() < self.rho;
            let g: f64 = rng.sample(StandardNormal);
            gross.push(if hit { g } else { 0.0 });
        }
        (small, gross)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustEcSpec {
    /// Message length `N`.
    pub n: usize,
    /// Encoding rate `M / N`.
    pub gamma: f64,
    pub channel: GrossErrorChannel,
}

impl RobustEcSpec {
    /// Codeword length `round(gamma N)`.
    pub fn m(&self) -> usize {
        (self.gamma * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        self.channel.validate()?;
        if self.n == 0 || self.m() <= self.n {
            return Err(CodeError::InvalidSpec("need M > N >= 1".into()));
        }
        Ok(())
    }
}

/// Default solver settings for the parity-check problem.
pub fn robust_amp_config() -> AmpConfig {
    AmpConfig { tol: 1e-24, t_max: 2000, ..AmpConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustEcTrial {
    pub seed: u64,
    /// `||s_hat - s|| / ||s_ideal - s||`.
    pub rho_ideal: f64,
    /// Relative error `||s_hat - s|| / ||s||`.
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub s: Vec<f64>,
    #[serde(skip)]
    pub s_hat: Vec<f64>,
}

/// Encode a Gaussian message into the kernel of a random parity-check
/// matrix, corrupt it, estimate the error from its syndrome with AMP and
/// project back.
pub fn robust_ec_roundtrip(spec: &RobustEcSpec, cfg: &AmpConfig, seed: u64) -> Result<RobustEcTrial, CodeError> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m());
    let f = gen_iid_gaussian(m - n, m, 1.0 / m as f64, seed)?;
    let a = f.nullspace_encoder()?;
    let mut rng = substream(seed, &[tag::SIGNAL]);
    let s: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = vec![0.0; m];
    a.forward_into(&s, &mut y);
    let (small, gross) = spec.channel.sample(m, seed);
    let y_ideal: Vec<f64> = y.iter().zip(&small).map(|(a, b)| a + b).collect();
    let y_tilde: Vec<f64> = y_ideal.iter().zip(&gross).map(|(a, b)| a + b).collect();

    let mut h = vec![0.0; m - n];
    f.forward_into(&y_tilde, &mut h);
    let res = run_amp(&f, &h, &spec.channel.prior(), &AmpConfig { delta: 0.0, ..*cfg }, None)?;
    let cleaned: Vec<f64> = y_tilde.iter().zip(&res.a).map(|(a, b)| a - b).collect();
    let s_hat = a.transpose_apply(&cleaned);
    let s_ideal = a.transpose_apply(&y_ideal);
    let dist = |u: &[f64]| u.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (num, den) = (dist(&s_hat), dist(&s_ideal));
    Ok(RobustEcTrial {
        seed,
        rho_ideal: if den > 0.0 { num / den } else if num == 0.0 { 1.0 } else { f64::INFINITY },
        error: num / norm,
        iterations: res.iterations,
        converged: res.converged,
        s,
        s_hat,
    })
}

/// `(gamma_opt, gamma_BP)` with `gamma_opt = 1/(1 - rho)` and
/// `gamma_BP = 1/(1 - alpha_BP)` from the error prior's potential; the
/// second is absent when the channel shows no spinodal.
pub fn gamma_thresholds(channel: &GrossErrorChannel) -> Result<(f64, Option<f64>), CodeError> {
    channel.validate()?;
    let family = BiGaussianFamily { se: BiGaussianSe::new(channel.prior()), delta: 0.0 };
    let t = find_transitions(&family, 0.02, 0.98, Easy::High, 1e-5)?;
    Ok((1.0 / (1.0 - channel.rho), t.bp.map(|b| 1.0 / (1.0 - b.value))))
}
