//! Expectation-maximization updates of the noise variance and of mixture
//! prior parameters, run alongside AMP.

use serde::{Deserialize, Serialize};

use crate::amp::{amp_step, trace_row, AmpConfig, AmpError, AmpResult, AmpState, Truth};
use crate::operators::LinearOperator;
use crate::priors::{MixtureComponent, MixturePrior};

/// Which of the two equivalent noise fixed-point equations to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseForm {
    /// `sum (y-w)^2 / (1 + Theta/Delta)^2 / sum (1 + Theta/Delta)^-1`.
    #[default]
    Form1,
    /// `[mean((y-w)^2 / (Delta+Theta)^2 + Theta / (Delta (Delta+Theta)))]^-1`.
    Form2,
}

/// Raw noise update; the caller clamps.
pub fn learn_noise(y: &[f64], w: &[f64], theta: &[f64], delta: f64, form: NoiseForm) -> f64 {
    match form {
        NoiseForm::Form1 => {
            let (mut num, mut den) = (0.0, 0.0);
            for ((&yi, &wi), &th) in y.iter().zip(w).zip(theta) {
                let q = 1.0 + th / delta;
                num += (yi - wi).powi(2) / (q * q);
                den += 1.0 / q;
            }
            num / den
        }
        NoiseForm::Form2 => {
            let mut s = 0.0;
            for ((&yi, &wi), &th) in y.iter().zip(w).zip(theta) {
                let d = delta + th;
                s += (yi - wi).powi(2) / (d * d) + th / (delta * d);
            }
            y.len() as f64 / s
        }
    }
}

/// Damping and bounds of one learned parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamLearn {
    pub damping: f64,
    pub min: f64,
    pub max: f64,
}

impl ParamLearn {
    pub fn new(damping: f64, min: f64, max: f64) -> Self {
        Self { damping, min, max }
    }

    fn apply(&self, old: f64, new: f64) -> f64 {
        let new = if new.is_finite() { new.clamp(self.min, self.max) } else { old };
        (self.damping * old + (1.0 - self.damping) * new).clamp(self.min, self.max)
    }

    fn validate(&self, name: &str) -> Result<(), AmpError> {
        if !(0.0..1.0).contains(&self.damping) || !self.min.is_finite() || !self.max.is_finite() || self.min > self.max
        {
            return Err(AmpError::InvalidConfig(format!("bad learning schedule for {name}")));
        }
        Ok(())
    }
}

pub fn default_noise_learn() -> ParamLearn {
    ParamLearn::new(0.5, 1e-12, 1e3)
}

pub fn default_rho_learn() -> ParamLearn {
    ParamLearn::new(0.5, 1e-6, 1.0 - 1e-6)
}

/// How the support fraction is estimated from the posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoRule {
    /// Fraction of entries whose noise posterior is below one half.
    #[default]
    Count,
    /// Mean posterior probability of the support components.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnSchedule {
    pub noise: Option<ParamLearn>,
    pub noise_form: NoiseForm,
    pub rho: Option<ParamLearn>,
    pub rho_rule: RhoRule,
    /// Rate of the exponential support components.
    pub lambda: Option<ParamLearn>,
    /// Mean of the noise components.
    pub mean: Option<ParamLearn>,
    /// Components modelling the non-signal part; chosen automatically when
    /// absent (Dirac masses, else the narrowest Gaussian).
    pub noise_components: Option<Vec<usize>>,
    /// First iteration at which updates are applied.
    pub start: usize,
}

impl Default for LearnSchedule {
    fn default() -> Self {
        Self {
            noise: None,
            noise_form: NoiseForm::Form1,
            rho: None,
            rho_rule: RhoRule::Count,
            lambda: None,
            mean: None,
            noise_components: None,
            start: 10,
        }
    }
}

impl LearnSchedule {
    pub fn is_empty(&self) -> bool {
        self.noise.is_none() && self.rho.is_none() && self.lambda.is_none() && self.mean.is_none()
    }

    pub fn validate(&self) -> Result<(), AmpError> {
        for (p, name) in [(&self.noise, "noise"), (&self.rho, "rho"), (&self.lambda, "lambda"), (&self.mean, "mean")] {
            if let Some(p) = p {
                p.validate(name)?;
            }
        }
        Ok(())
    }

    /// Names of the learned values, in trace order.
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.noise.is_some() {
            v.push("delta");
        }
        if self.rho.is_some() {
            v.push("rho");
        }
        if self.lambda.is_some() {
            v.push("lambda");
        }
        if self.mean.is_some() {
            v.push("mean");
        }
        v
    }
}

/// Default split of a mixture into noise and support components.
pub fn auto_noise_components(prior: &MixturePrior) -> Vec<usize> {
    let dirac: Vec<usize> = prior
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c, MixtureComponent::Dirac { .. }))
        .map(|(i, _)| i)
        .collect();
    if !dirac.is_empty() {
        return dirac;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in prior.components.iter().enumerate() {
        if let MixtureComponent::Gauss { v, .. } = c {
            if best.is_none_or(|(_, bv)| *v < bv) {
                best = Some((i, *v));
            }
        }
    }
    best.map(|(i, _)| vec![i]).unwrap_or_default()
}

/// Current support fraction of a mixture.
pub fn support_fraction(prior: &MixturePrior, noise: &[usize]) -> f64 {
    let total: f64 = prior.components.iter().map(|c| c.weight()).sum();
    let nw: f64 = noise.iter().map(|&i| prior.components[i].weight()).sum();
    1.0 - nw / total
}

/// Raw (undamped) mixture estimates from the fields and current estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureEstimate {
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub mean: Option<f64>,
}

/// Support fraction from the noise posteriors, `lambda = 1 / <a>` over the
/// support and `m = <a>` over the noise entries. Fields with an empty set
/// come back as `None`.
pub fn learn_mixture(
    prior: &MixturePrior,
    r: &[f64],
    sigma2: &[f64],
    a: &[f64],
    noise: &[usize],
    rule: RhoRule,
) -> MixtureEstimate {
    let n = r.len();
    let (mut count, mut expected) = (0usize, 0.0);
    let (mut sum_s, mut sum_n, mut n_n) = (0.0, 0.0, 0usize);
    for i in 0..n {
        let pn = prior.support_posterior(r[i], sigma2[i], noise);
        expected += 1.0 - pn;
        if pn < 0.5 {
            count += 1;
            sum_s += a[i];
        } else {
            n_n += 1;
            sum_n += a[i];
        }
    }
    let rho = match rule {
        RhoRule::Count => count as f64 / n as f64,
        RhoRule::Expected => expected / n as f64,
    };
    MixtureEstimate {
        rho: (n > 0).then_some(rho),
        lambda: (count > 0 && sum_s > 0.0).then(|| count as f64 / sum_s),
        mean: (n_n > 0).then(|| sum_n / n_n as f64),
    }
}

/// Writes a new support fraction into the weights, keeping the relative
/// weights inside each group.
pub fn set_support_fraction(prior: &mut MixturePrior, noise: &[usize], rho: f64) {
    let old = support_fraction(prior, noise);
    let total: f64 = prior.components.iter().map(|c| c.weight()).sum();
    let k = prior.components.len();
    let n_supp = k - noise.len();
    let n_noise = noise.len();
    for (i, c) in prior.components.iter_mut().enumerate() {
        let is_noise = noise.contains(&i);
        let w = c.weight() / total;
        let nw = match (is_noise, old) {
            (true, o) if o < 1.0 => w * (1.0 - rho) / (1.0 - o),
            (true, _) => (1.0 - rho) / n_noise as f64,
            (false, o) if o > 0.0 => w * rho / o,
            (false, _) => rho / n_supp as f64,
        };
        c.set_weight(nw);
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub result: AmpResult,
    pub prior: MixturePrior,
    pub delta: f64,
    /// Column names of `TraceRow::learned`.
    pub names: Vec<&'static str>,
}

/// AMP with one damped EM update per iteration from `schedule.start` on.
pub fn run_amp_em<O>(
    op: &O,
    y: &[f64],
    prior0: &MixturePrior,
    cfg: &AmpConfig,
    schedule: &LearnSchedule,
    truth: Option<&Truth>,
) -> Result<EmResult, AmpError>
where
    O: LinearOperator + ?Sized,
{
    cfg.validate()?;
    schedule.validate()?;
    let mut prior = prior0.clone();
    let mut cfg = *cfg;
    let noise = schedule.noise_components.clone().unwrap_or_else(|| auto_noise_components(&prior));
    if noise.iter().any(|&i| i >= prior.components.len()) {
        return Err(AmpError::InvalidConfig("noise component index out of range".into()));
    }
    if schedule.noise.is_some() && !(cfg.delta > 0.0) {
        return Err(AmpError::InvalidConfig("noise learning needs a positive starting variance".into()));
    }
    let names = schedule.names();
    let mut st = AmpState::from_prior(op, y, &prior)?;
    let mut trace = Vec::new();
    let (mut converged, mut diverged) = (false, false);
    let mut first = None;
    while st.t < cfg.t_max {
        amp_step(&mut st, op, y, &prior, &cfg)?;
        if st.t >= schedule.start && !schedule.is_empty() {
            em_update(&st, y, &mut prior, &mut cfg.delta, schedule, &noise);
        }
        let mut row = trace_row(&st, truth);
        row.learned = learned_values(&prior, cfg.delta, schedule, &noise);
        trace.push(row);
        if st.delta < cfg.tol && st.t > schedule.start.min(cfg.t_max) {
            converged = true;
            break;
        }
        if st.delta < cfg.tol && schedule.is_empty() {
            converged = true;
            break;
        }
        let d0 = *first.get_or_insert(st.delta);
        if d0 > 0.0 && st.delta > cfg.divergence_factor * d0 {
            diverged = true;
            break;
        }
    }
    let result = AmpResult {
        a: st.a.clone(),
        v: st.v.clone(),
        converged,
        diverged,
        iterations: st.t,
        trace,
        free_energy: None,
        state: st,
    };
    Ok(EmResult { result, prior, delta: cfg.delta, names })
}

fn em_update(
    st: &AmpState,
    y: &[f64],
    prior: &mut MixturePrior,
    delta: &mut f64,
    s: &LearnSchedule,
    noise: &[usize],
) {
    if let Some(p) = &s.noise {
        let raw = learn_noise(y, &st.w, &st.theta, *delta, s.noise_form);
        *delta = p.apply(*delta, raw);
    }
    if s.rho.is_none() && s.lambda.is_none() && s.mean.is_none() {
        return;
    }
    let est = learn_mixture(prior, &st.r, &st.sigma2, &st.a, noise, s.rho_rule);
    if let (Some(p), Some(raw)) = (&s.rho, est.rho) {
        let old = support_fraction(prior, noise);
        set_support_fraction(prior, noise, p.apply(old, raw));
    }
    for (i, c) in prior.components.iter_mut().enumerate() {
        match c {
            MixtureComponent::Exponential { lambda, .. } if !noise.contains(&i) => {
                if let (Some(p), Some(raw)) = (&s.lambda, est.lambda) {
                    *lambda = p.apply(*lambda, raw);
                }
            }
            MixtureComponent::Gauss { m, .. } | MixtureComponent::Dirac { m, .. } if noise.contains(&i) => {
                if let (Some(p), Some(raw)) = (&s.mean, est.mean) {
                    *m = p.apply(*m, raw);
                }
            }
            _ => {}
        }
    }
}

fn learned_values(prior: &MixturePrior, delta: f64, s: &LearnSchedule, noise: &[usize]) -> Vec<f64> {
    let mut v = Vec::new();
    if s.noise.is_some() {
        v.push(delta);
    }
    if s.rho.is_some() {
        v.push(support_fraction(prior, noise));
    }
    if s.lambda.is_some() {
        let l = prior.components.iter().enumerate().find_map(|(i, c)| match c {
            MixtureComponent::Exponential { lambda, .. } if !noise.contains(&i) => Some(*lambda),
            _ => None,
        });
        v.push(l.unwrap_or(f64::NAN));
    }
    if s.mean.is_some() {
        let m = noise.iter().find_map(|&i| match prior.components[i] {
            MixtureComponent::Gauss { m, .. } | MixtureComponent::Dirac { m, .. } => Some(m),
            _ => None,
        });
        v.push(m.unwrap_or(f64::NAN));
    }
    v
}
