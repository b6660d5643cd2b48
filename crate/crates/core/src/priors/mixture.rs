use rand::RngCore;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PriorError, ScalarPrior, VARIANCE_FLOOR};
use crate::special::{ln_erfc, ln_normal_pdf, log_sum_exp, truncated_normal_positive};

/// One weighted component of a mixture prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComponent", into = "RawComponent")]
pub enum MixtureComponent {
    Dirac { m: f64, weight: f64 },
    Gauss { m: f64, v: f64, weight: f64 },
    /// `lambda exp(-lambda x)` on `x > 0`.
    Exponential { lambda: f64, weight: f64 },
    /// `(beta/2) exp(-beta |x|)`.
    Laplace { beta: f64, weight: f64 },
}

#[derive(Serialize, Deserialize)]
struct RawComponent {
    kind: String,
    params: Vec<f64>,
    weight: f64,
}

impl TryFrom<RawComponent> for MixtureComponent {
    type Error = String;
    fn try_from(r: RawComponent) -> Result<Self, String> {
        let need = |k: usize| {
            if r.params.len() == k {
                Ok(())
            } else {
                Err(format!("component '{}' takes {k} parameter(s)", r.kind))
            }
        };
        let c = match r.kind.as_str() {
            "dirac" => {
                need(1)?;
                MixtureComponent::Dirac { m: r.params[0], weight: r.weight }
            }
            "gauss" => {
                need(2)?;
                MixtureComponent::Gauss { m: r.params[0], v: r.params[1], weight: r.weight }
            }
            "exponential" => {
                need(1)?;
                MixtureComponent::Exponential { lambda: r.params[0], weight: r.weight }
            }
            "laplace" => {
                need(1)?;
                MixtureComponent::Laplace { beta: r.params[0], weight: r.weight }
            }
            k => return Err(format!("unknown component kind '{k}'")),
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

impl From<MixtureComponent> for RawComponent {
    fn from(c: MixtureComponent) -> Self {
        let (kind, params) = match c {
            MixtureComponent::Dirac { m, .. } => ("dirac", vec![m]),
            MixtureComponent::Gauss { m, v, .. } => ("gauss", vec![m, v]),
            MixtureComponent::Exponential { lambda, .. } => ("exponential", vec![lambda]),
            MixtureComponent::Laplace { beta, .. } => ("laplace", vec![beta]),
        };
        RawComponent { kind: kind.into(), params, weight: c.weight() }
    }
}

/// Posterior summary of one component: log of (weight x evidence), first and
/// second posterior moments.
#[derive(Debug, Clone, Copy)]
struct Term {
    ln_wz: f64,
    m1: f64,
    m2: f64,
}

fn exponential_term(lambda: f64, r: f64, s2: f64) -> (f64, f64, f64) {
    let mu = r - lambda * s2;
    let ln_z = lambda.ln() - lambda * r + 0.5 * lambda * lambda * s2
        + (0.5f64).ln()
        + ln_erfc(-mu / (2.0 * s2).sqrt());
    let (m, v) = truncated_normal_positive(mu, s2);
    (ln_z, m, v + m * m)
}

impl MixtureComponent {
    pub fn weight(&self) -> f64 {
        match *self {
            MixtureComponent::Dirac { weight, .. }
            | MixtureComponent::Gauss { weight, .. }
            | MixtureComponent::Exponential { weight, .. }
            | MixtureComponent::Laplace { weight, .. } => weight,
        }
    }

    pub fn set_weight(&mut self, w: f64) {
        match self {
            MixtureComponent::Dirac { weight, .. }
            | MixtureComponent::Gauss { weight, .. }
            | MixtureComponent::Exponential { weight, .. }
            | MixtureComponent::Laplace { weight, .. } => *weight = w,
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let bad = |m: &str| Err(PriorError::InvalidParameter(m.into()));
        if !(self.weight() >= 0.0) || !self.weight().is_finite() {
            return bad("weights must be finite and >= 0");
        }
        match *self {
            MixtureComponent::Dirac { m, .. } if !m.is_finite() => bad("dirac location"),
            MixtureComponent::Gauss { m, v, .. } if !m.is_finite() || !(v >= 0.0) || !v.is_finite() => {
                bad("gauss needs finite mean and v >= 0")
            }
            MixtureComponent::Exponential { lambda, .. } if !(lambda > 0.0) || !lambda.is_finite() => {
                bad("exponential needs lambda > 0")
            }
            MixtureComponent::Laplace { beta, .. } if !(beta > 0.0) || !beta.is_finite() => {
                bad("laplace needs beta > 0")
            }
            _ => Ok(()),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            MixtureComponent::Dirac { m, .. } | MixtureComponent::Gauss { m, .. } => m,
            MixtureComponent::Exponential { lambda, .. } => 1.0 / lambda,
            MixtureComponent::Laplace { .. } => 0.0,
        }
    }

    fn second_moment(&self) -> f64 {
        match *self {
            MixtureComponent::Dirac { m, .. } => m * m,
            MixtureComponent::Gauss { m, v, .. } => m * m + v,
            MixtureComponent::Exponential { lambda, .. } => 2.0 / (lambda * lambda),
            MixtureComponent::Laplace { beta, .. } => 2.0 / (beta * beta),
        }
    }

    fn term(&self, r: f64, s2: f64) -> Term {
        let lw = self.weight().ln();
        match *self {
            MixtureComponent::Dirac { m, .. } => Term { ln_wz: lw + ln_normal_pdf(m, r, s2), m1: m, m2: m * m },
            MixtureComponent::Gauss { m, v, .. } => {
                let mu = (v * r + s2 * m) / (s2 + v);
                let var = v * s2 / (v + s2);
                Term { ln_wz: lw + ln_normal_pdf(r, m, s2 + v), m1: mu, m2: mu * mu + var }
            }
            MixtureComponent::Exponential { lambda, .. } => {
                let (lz, m1, m2) = exponential_term(lambda, r, s2);
                Term { ln_wz: lw + lz, m1, m2 }
            }
            MixtureComponent::Laplace { beta, .. } => {
                // positive half plus the mirror image of the negative half
                let (lp, p1, p2) = exponential_term(beta, r, s2);
                let (ln, n1, n2) = exponential_term(beta, -r, s2);
                let half = (0.5f64).ln();
                let lz = half + log_sum_exp(&[lp, ln]);
                let wp = (half + lp - lz).exp();
                let wn = (half + ln - lz).exp();
                Term { ln_wz: lw + lz, m1: wp * p1 - wn * n1, m2: wp * p2 + wn * n2 }
            }
        }
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            MixtureComponent::Dirac { m, .. } => m,
            MixtureComponent::Gauss { m, v, .. } => m + v.sqrt() * rng.sample::<f64, _>(StandardNormal),
            MixtureComponent::Exponential { lambda, .. } => Exp::new(lambda).unwrap().sample(rng),
            MixtureComponent::Laplace { beta, .. } => {
                let x: f64 = Exp::new(beta).unwrap().sample(rng);
                if rng.random::<bool>() {
                    x
                } else {
                    -x
                }
            }
        }
    }
}

/// Mixture prior `sum_u w_u P_u(x)`. Weights need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub components: Vec<MixtureComponent>,
}

impl MixturePrior {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self, PriorError> {
        for c in &components {
            c.validate()?;
        }
        if !components.iter().any(|c| c.weight() > 0.0) {
            return Err(PriorError::Empty);
        }
        Ok(Self { components })
    }

    /// `(1 - rho) delta_0 + rho N(0, 1)`.
    pub fn gauss_bernoulli(rho: f64) -> Self {
        Self::new(vec![
            MixtureComponent::Dirac { m: 0.0, weight: 1.0 - rho },
            MixtureComponent::Gauss { m: 0.0, v: 1.0, weight: rho },
        ])
        .expect("valid gauss-bernoulli prior")
    }

    /// `rho N(0, s1) + (1 - rho) N(0, s2)`.
    pub fn bigaussian(rho: f64, sigma1sq: f64, sigma2sq: f64) -> Self {
        Self::new(vec![
            MixtureComponent::Gauss { m: 0.0, v: sigma1sq, weight: rho },
            MixtureComponent::Gauss { m: 0.0, v: sigma2sq, weight: 1.0 - rho },
        ])
        .expect("valid bi-gaussian prior")
    }

    fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight()).sum()
    }

    fn terms(&self, r: f64, s2: f64) -> Vec<Term> {
        self.components.iter().filter(|c| c.weight() > 0.0).map(|c| c.term(r, s2)).collect()
    }

    /// Posterior probability of the components listed in `noise`.
    pub fn support_posterior(&self, r: f64, sigma2: f64, noise: &[usize]) -> f64 {
        let lz: Vec<f64> = self
            .components
            .iter()
            .map(|c| if c.weight() > 0.0 { c.term(r, sigma2).ln_wz } else { f64::NEG_INFINITY })
            .collect();
        let total = log_sum_exp(&lz);
        let picked: Vec<f64> = noise.iter().filter_map(|&i| lz.get(i).copied()).collect();
        if picked.is_empty() {
            return 0.0;
        }
        (log_sum_exp(&picked) - total).exp().clamp(0.0, 1.0)
    }

    /// Posterior component responsibilities.
    pub fn responsibilities(&self, r: f64, sigma2: f64) -> Vec<f64> {
        let lz: Vec<f64> = self
            .components
            .iter()
            .map(|c| if c.weight() > 0.0 { c.term(r, sigma2).ln_wz } else { f64::NEG_INFINITY })
            .collect();
        let total = log_sum_exp(&lz);
        lz.iter().map(|l| (l - total).exp()).collect()
    }
}

impl ScalarPrior for MixturePrior {
    fn denoise(&self, r: f64, sigma2: f64) -> (f64, f64) {
        let terms = self.terms(r, sigma2);
        let lmax = terms.iter().map(|t| t.ln_wz).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut g, mut t) = (0.0, 0.0, 0.0);
        for term in &terms {
            let w = (term.ln_wz - lmax).exp();
            z += w;
            g += w * term.m1;
            t += w * term.m2;
        }
        let a = g / z;
        (a, (t / z - a * a).max(VARIANCE_FLOOR))
    }

    fn log_evidence(&self, r: f64, sigma2: f64) -> f64 {
        let lz: Vec<f64> = self.terms(r, sigma2).iter().map(|t| t.ln_wz).collect();
        log_sum_exp(&lz) - self.total_weight().ln()
    }

    fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight() * c.mean()).sum::<f64>() / self.total_weight()
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    fn second_moment(&self) -> f64 {
        self.components.iter().map(|c| c.weight() * c.second_moment()).sum::<f64>() / self.total_weight()
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let mut u = rng.random::<f64>() * self.total_weight();
        for c in &self.components {
            u -= c.weight();
            if u < 0.0 {
                return c.sample_one(rng);
            }
        }
        let last = self.components.iter().rev().find(|c| c.weight() > 0.0).unwrap();
        last.sample_one(rng)
    }
}

/// Zero-mean two-Gaussian prior `rho N(0, s1) + (1 - rho) N(0, s2)` with a
/// closed-form denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiGaussian {
    pub rho: f64,
    pub sigma1sq: f64,
    pub sigma2sq: f64,
}

/// Posterior mean and variance under the bi-Gaussian prior.
pub fn denoise_bigaussian(rho: f64, sigma1sq: f64, sigma2sq: f64, r: f64, sigma2: f64) -> (f64, f64) {
    let t1 = sigma2 + sigma1sq;
    let t2 = sigma2 + sigma2sq;
    // posterior weight of the first component as a logistic of its log-odds
    let p1 = if rho >= 1.0 {
        1.0
    } else if rho <= 0.0 {
        0.0
    } else {
        let odds = (rho / (1.0 - rho)).ln() - 0.5 * (t1 / t2).ln() - 0.5 * r * r * (1.0 / t1 - 1.0 / t2);
        1.0 / (1.0 + (-odds).exp())
    };
    let p2 = 1.0 - p1;
    let m1 = r * sigma1sq / t1;
    let m2 = r * sigma2sq / t2;
    let v1 = sigma1sq * sigma2 / t1;
    let v2 = sigma2sq * sigma2 / t2;
    let a = p1 * m1 + p2 * m2;
    let c = p1 * (v1 + m1 * m1) + p2 * (v2 + m2 * m2) - a * a;
    (a, c.max(VARIANCE_FLOOR))
}

impl BiGaussian {
    pub fn new(rho: f64, sigma1sq: f64, sigma2sq: f64) -> Result<Self, PriorError> {
        if !(0.0..=1.0).contains(&rho) || !(sigma1sq >= 0.0) || !(sigma2sq >= 0.0) {
            return Err(PriorError::InvalidParameter("bi-gaussian parameters".into()));
        }
        Ok(Self { rho, sigma1sq, sigma2sq })
    }

    /// Approximately sparse signal: `rho N(0, 1) + (1 - rho) N(0, eps)`.
    pub fn approx_sparse(rho: f64, eps: f64) -> Self {
        Self { rho, sigma1sq: 1.0, sigma2sq: eps }
    }

    pub fn to_mixture(&self) -> MixturePrior {
        MixturePrior::bigaussian(self.rho, self.sigma1sq, self.sigma2sq)
    }
}

impl ScalarPrior for BiGaussian {
    fn denoise(&self, r: f64, sigma2: f64) -> (f64, f64) {
        denoise_bigaussian(self.rho, self.sigma1sq, self.sigma2sq, r, sigma2)
    }
    fn log_evidence(&self, r: f64, sigma2: f64) -> f64 {
        let mut parts = Vec::with_capacity(2);
        if self.rho > 0.0 {
            parts.push(self.rho.ln() + ln_normal_pdf(r, 0.0, sigma2 + self.sigma1sq));
        }
        if self.rho < 1.0 {
            parts.push((1.0 - self.rho).ln() + ln_normal_pdf(r, 0.0, sigma2 + self.sigma2sq));
        }
        log_sum_exp(&parts)
    }
    fn mean(&self) -> f64 {
        0.0
    }
    fn variance(&self) -> f64 {
        self.rho * self.sigma1sq + (1.0 - self.rho) * self.sigma2sq
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let v = if rng.random::<f64>() < self.rho { self.sigma1sq } else { self.sigma2sq };
        v.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}
