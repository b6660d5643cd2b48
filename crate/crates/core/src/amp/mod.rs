//! Finite-size AMP solvers, the naive mean-field baseline, the instance
//! free energy and error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::{BlockLayout, LinearOperator, OperatorError};
use crate::priors::{Denoiser, VARIANCE_FLOOR};

pub mod complex;
pub mod metrics;

pub use complex::{run_complex_amp, ComplexAmpResult};
pub use metrics::{argmax_sections, mse, ser};

#[derive(Debug, Error)]
pub enum AmpError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at iteration {t}")]
    NonFinite { t: usize, snapshot: Box<AmpState> },
    #[error("the operator carries no block layout")]
    NoBlockLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmpConfig {
    /// Damping on `(w, Theta)`, in `[0, 1)`.
    pub damping: f64,
    /// Stop once `||a^{t+1} - a^t||^2 / N` falls below this.
    pub tol: f64,
    pub t_max: usize,
    /// Noise variance `Delta = 1/snr`.
    pub delta: f64,
    /// Stop and flag divergence once the update norm exceeds its first
    /// value by this factor.
    pub divergence_factor: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { damping: 0.0, tol: 1e-8, t_max: 3000, delta: 0.0, divergence_factor: 1e6 }
    }
}

impl AmpConfig {
    /// `Delta = P / snr` with unit signal power.
    pub fn from_snr(snr: f64) -> Self {
        Self { delta: 1.0 / snr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AmpError> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(AmpError::InvalidConfig("damping must lie in [0, 1)".into()));
        }
        if !(self.tol > 0.0) {
            return Err(AmpError::InvalidConfig("tol must be positive".into()));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(AmpError::InvalidConfig("noise variance must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub t: usize,
    /// Last update norm `||a^{t} - a^{t-1}||^2 / N`.
    pub delta: f64,
}

impl AmpState {
    /// Starts from `(a, v)`, with `w = y` and `Theta = F^2 v`.
    pub fn new<O: LinearOperator + ?Sized>(op: &O, y: &[f64], a: Vec<f64>, v: Vec<f64>) -> Result<Self, AmpError> {
        check(op.ncols(), a.len())?;
        check(op.ncols(), v.len())?;
        check(op.nrows(), y.len())?;
        let mut theta = vec![0.0; op.nrows()];
        op.forward_sq_into(&v, &mut theta);
        let n = a.len();
        Ok(Self {
            a,
            v,
            w: y.to_vec(),
            theta,
            r: vec![0.0; n],
            sigma2: vec![f64::INFINITY; n],
            t: 0,
            delta: f64::INFINITY,
        })
    }

    /// Prior-mean start.
    pub fn from_prior<O: LinearOperator + ?Sized, D: Denoiser + ?Sized>(
        op: &O,
        y: &[f64],
        den: &D,
    ) -> Result<Self, AmpError> {
        let (a, v) = den.init(op.ncols());
        Self::new(op, y, a, v)
    }
}

fn check(expected: usize, got: usize) -> Result<(), AmpError> {
    if expected != got {
        Err(OperatorError::DimensionMismatch { expected, got }.into())
    } else {
        Ok(())
    }
}

/// Ground truth used for per-iteration error traces.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub signal: &'a [f64],
    /// Section size for SER; `None` for scalar problems.
    pub section: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub delta: f64,
    pub mse: Option<f64>,
    pub ser: Option<f64>,
    /// Learned parameters, when EM is running.
    #[serde(default)]
    pub learned: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AmpResult {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub free_energy: Option<f64>,
    pub state: AmpState,
}

/// One AMP iteration. With `layout` set, every squared-entry product is
/// replaced by its block average (full-TAP form).
pub fn amp_step_with<O, D>(
    st: &mut AmpState,
    op: &O,
    y: &[f64],
    den: &D,
    cfg: &AmpConfig,
    layout: Option<&BlockLayout>,
) -> Result<(), AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    let (m, n) = (op.nrows(), op.ncols());
    let mut fa = vec![0.0; m];
    let mut th = vec![0.0; m];
    match layout {
        None => op.forward_pair(&st.a, &st.v, &mut fa, &mut th),
        Some(l) => {
            op.forward_into(&st.a, &mut fa);
            l.forward_sq(&st.v, &mut th);
        }
    }
    let d = cfg.damping;
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m];
    for mu in 0..m {
        let res = y[mu] - st.w[mu];
        let onsager = if res == 0.0 { 0.0 } else { th[mu] * res / (cfg.delta + st.theta[mu]) };
        st.w[mu] = d * st.w[mu] + (1.0 - d) * (fa[mu] - onsager);
        st.theta[mu] = d * st.theta[mu] + (1.0 - d) * th[mu];
        h[mu] = 1.0 / (cfg.delta + st.theta[mu]);
        g[mu] = (y[mu] - st.w[mu]) * h[mu];
    }
    let mut bg = vec![0.0; n];
    let mut bh = vec![0.0; n];
    match layout {
        None => op.backward_pair(&g, &h, &mut bg, &mut bh),
        Some(l) => {
            op.backward_into(&g, &mut bg);
            l.backward_sq(&h, &mut bh);
        }
    }
    for i in 0..n {
        st.sigma2[i] = 1.0 / bh[i];
        st.r[i] = st.a[i] + st.sigma2[i] * bg[i];
    }
    let mut a_new = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    den.denoise_into(&st.r, &st.sigma2, &mut a_new, &mut v_new);
    let mut delta = 0.0;
    for i in 0..n {
        let diff = a_new[i] - st.a[i];
        delta += diff * diff;
        v_new[i] = v_new[i].max(VARIANCE_FLOOR);
    }
    st.a = a_new;
    st.v = v_new;
    st.t += 1;
    st.delta = delta / n as f64;
    if !st.delta.is_finite() || st.v.iter().any(|x| !x.is_finite()) || st.w.iter().any(|x| !x.is_finite()) {
        return Err(AmpError::NonFinite { t: st.t, snapshot: Box::new(st.clone()) });
    }
    Ok(())
}

/// One standard AMP iteration.
pub fn amp_step<O, D>(st: &mut AmpState, op: &O, y: &[f64], den: &D, cfg: &AmpConfig) -> Result<(), AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    amp_step_with(st, op, y, den, cfg, None)
}

/// Extra knobs of [`run_amp_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Use block-averaged squared entries.
    pub full_tap: bool,
    /// Starting `(a, v)`; the prior moments otherwise.
    pub init: Option<(Vec<f64>, Vec<f64>)>,
    /// Evaluate the instance free energy at the end.
    pub free_energy: bool,
}

pub(crate) fn trace_row(st: &AmpState, truth: Option<&Truth>) -> TraceRow {
    let (mse_v, ser_v) = match truth {
        Some(tr) => (Some(mse(&st.a, tr.signal)), tr.section.map(|b| ser(&st.a, tr.signal, b))),
        None => (None, None),
    };
    TraceRow { t: st.t, delta: st.delta, mse: mse_v, ser: ser_v, learned: Vec::new() }
}

/// AMP until convergence, divergence or `t_max`, reporting to `observer`
/// after every iteration.
pub fn run_amp_with<O, D>(
    op: &O,
    y: &[f64],
    den: &D,
    cfg: &AmpConfig,
    truth: Option<&Truth>,
    opts: &RunOptions,
    mut observer: Option<&mut dyn FnMut(&AmpState)>,
) -> Result<AmpResult, AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    cfg.validate()?;
    let layout = if opts.full_tap { Some(op.block_layout().ok_or(AmpError::NoBlockLayout)?) } else { None };
    let mut st = match &opts.init {
        Some((a, v)) => AmpState::new(op, y, a.clone(), v.clone())?,
        None => AmpState::from_prior(op, y, den)?,
    };
    if let Some(l) = &layout {
        l.forward_sq(&st.v, &mut st.theta);
    }
    let mut trace = Vec::new();
    let mut first_delta = None;
    let mut converged = false;
    let mut diverged = false;
    while st.t < cfg.t_max {
        amp_step_with(&mut st, op, y, den, cfg, layout.as_ref())?;
        trace.push(trace_row(&st, truth));
        if let Some(obs) = observer.as_mut() {
            obs(&st);
        }
        if st.delta < cfg.tol {
            converged = true;
            break;
        }
        let d0 = *first_delta.get_or_insert(st.delta);
        if d0 > 0.0 && st.delta > cfg.divergence_factor * d0 {
            diverged = true;
            break;
        }
    }
    let free_energy = if opts.free_energy { Some(instance_free_energy(&st, op, y, den, cfg.delta)?) } else { None };
    Ok(AmpResult {
        a: st.a.clone(),
        v: st.v.clone(),
        converged,
        diverged,
        iterations: st.t,
        trace,
        free_energy,
        state: st,
    })
}

pub fn run_amp<O, D>(op: &O, y: &[f64], den: &D, cfg: &AmpConfig, truth: Option<&Truth>) -> Result<AmpResult, AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    run_amp_with(op, y, den, cfg, truth, &RunOptions::default(), None)
}

/// Full-TAP AMP: `Theta` and `Sigma^2` only depend on block indices.
pub fn run_amp_full_tap<O, D>(
    op: &O,
    y: &[f64],
    den: &D,
    cfg: &AmpConfig,
    truth: Option<&Truth>,
) -> Result<AmpResult, AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    let opts = RunOptions { full_tap: true, ..Default::default() };
    run_amp_with(op, y, den, cfg, truth, &opts, None)
}

/// Naive mean-field iteration (no Onsager term). A zero noise variance is
/// replaced by `1e-12` so that the fixed `Sigma^2` stays positive.
pub fn run_iterative_thresholding<O, D>(
    op: &O,
    y: &[f64],
    den: &D,
    cfg: &AmpConfig,
    truth: Option<&Truth>,
) -> Result<AmpResult, AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    cfg.validate()?;
    check(op.nrows(), y.len())?;
    let (m, n) = (op.nrows(), op.ncols());
    let delta = cfg.delta.max(1e-12);
    let mut col_sq = vec![0.0; n];
    op.backward_sq_into(&vec![1.0; m], &mut col_sq);
    let sigma2: Vec<f64> = col_sq.iter().map(|c| delta / c).collect();
    let (a0, v0) = den.init(n);
    let mut st = AmpState::new(op, y, a0, v0)?;
    st.sigma2 = sigma2.clone();
    let mut trace = Vec::new();
    let (mut converged, mut diverged) = (false, false);
    let mut first_delta = None;
    let mut fa = vec![0.0; m];
    let mut back = vec![0.0; n];
    while st.t < cfg.t_max {
        op.forward_into(&st.a, &mut fa);
        let res: Vec<f64> = y.iter().zip(&fa).map(|(a, b)| a - b).collect();
        op.backward_into(&res, &mut back);
        for i in 0..n {
            st.r[i] = st.a[i] + sigma2[i] / delta * back[i];
        }
        let mut a_new = vec![0.0; n];
        den.denoise_into(&st.r, &sigma2, &mut a_new, &mut st.v);
        st.delta = a_new.iter().zip(&st.a).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n as f64;
        st.a = a_new;
        st.t += 1;
        if !st.delta.is_finite() {
            return Err(AmpError::NonFinite { t: st.t, snapshot: Box::new(st.clone()) });
        }
        trace.push(trace_row(&st, truth));
        if st.delta < cfg.tol {
            converged = true;
            break;
        }
        let d0 = *first_delta.get_or_insert(st.delta);
        if d0 > 0.0 && st.delta > cfg.divergence_factor * d0 {
            diverged = true;
            break;
        }
    }
    Ok(AmpResult {
        a: st.a.clone(),
        v: st.v.clone(),
        converged,
        diverged,
        iterations: st.t,
        trace,
        free_energy: None,
        state: st,
    })
}

/// Bethe free energy of an instance, valid at an AMP fixed point:
/// `1/2 sum_mu [(y - F a)^2 / Delta + ln(1 + (F^2 v)_mu / Delta)]
///  + M/2 ln(2 pi Delta) + sum_i KL(P_i || P_0)`.
pub fn instance_free_energy<O, D>(st: &AmpState, op: &O, y: &[f64], den: &D, delta: f64) -> Result<f64, AmpError>
where
    O: LinearOperator + ?Sized,
    D: Denoiser + ?Sized,
{
    if !(delta > 0.0) {
        return Err(AmpError::InvalidConfig("free energy needs a positive noise variance".into()));
    }
    let m = op.nrows();
    let mut fa = vec![0.0; m];
    let mut fv = vec![0.0; m];
    op.forward_pair(&st.a, &st.v, &mut fa, &mut fv);
    let mut f = 0.5 * m as f64 * (2.0 * std::f64::consts::PI * delta).ln();
    for mu in 0..m {
        let res = y[mu] - fa[mu];
        f += 0.5 * (res * res / delta + (fv[mu] / delta).ln_1p());
    }
    // KL(P_i || P_0) = -ln z_i - ((R_i - a_i)^2 + v_i) / (2 Sigma_i^2) with
    // z_i the unnormalized evidence, i.e. ln z_i = ln evidence + ln(2 pi Sigma_i^2)/2
    let mut kl = -den.log_evidence_sum(&st.r, &st.sigma2);
    for i in 0..st.a.len() {
        let s2 = st.sigma2[i];
        let d = st.r[i] - st.a[i];
        kl -= 0.5 * (2.0 * std::f64::consts::PI * s2).ln() + (d * d + st.v[i]) / (2.0 * s2);
    }
    Ok(f + kl)
}
