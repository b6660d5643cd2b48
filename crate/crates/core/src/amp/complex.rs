use num_complex::Complex64;

use super::{AmpConfig, AmpError, TraceRow};
use crate::operators::{ComplexOperator, OperatorError};
use crate::priors::{ComplexDenoiser, VARIANCE_FLOOR};

#[derive(Debug, Clone)]
pub struct ComplexAmpResult {
    pub a: Vec<Complex64>,
    /// Posterior variances per real dimension.
    pub v: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Mean squared error per real dimension, `mean |a - s|^2 / 2`.
pub fn complex_mse(a: &[Complex64], s: &[Complex64]) -> f64 {
    a.iter().zip(s).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / (2.0 * a.len() as f64)
}

/// AMP for complex signals and operators. `cfg.delta` is the noise variance
/// per real dimension and the backward product is the conjugate transpose.
pub fn run_complex_amp<O, D>(
    op: &O,
    y: &[Complex64],
    den: &D,
    cfg: &AmpConfig,
    truth: Option<&[Complex64]>,
) -> Result<ComplexAmpResult, AmpError>
where
    O: ComplexOperator + ?Sized,
    D: ComplexDenoiser + ?Sized,
{
    cfg.validate()?;
    let (m, n) = (op.nrows(), op.ncols());
    if y.len() != m {
        return Err(OperatorError::DimensionMismatch { expected: m, got: y.len() }.into());
    }
    let (mean, var) = den.moments();
    let mut a = vec![mean; n];
    let mut v = vec![var.max(VARIANCE_FLOOR); n];
    let mut w = y.to_vec();
    let mut theta = vec![0.0; m];
    op.forward_sq_into(&v, &mut theta);

    let mut fa = vec![Complex64::new(0.0, 0.0); m];
    let mut th = vec![0.0; m];
    let mut g = vec![Complex64::new(0.0, 0.0); m];
    let mut h = vec![0.0; m];
    let mut bg = vec![Complex64::new(0.0, 0.0); n];
    let mut bh = vec![0.0; n];
    let mut trace = Vec::new();
    let (mut converged, mut diverged) = (false, false);
    let mut first = None;
    let d = cfg.damping;
    let mut t = 0;
    while t < cfg.t_max {
        op.forward_into(&a, &mut fa);
        op.forward_sq_into(&v, &mut th);
        for mu in 0..m {
            let res = y[mu] - w[mu];
            let onsager = if res == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                res * (th[mu] / (cfg.delta + theta[mu]))
            };
            w[mu] = w[mu] * d + (fa[mu] - onsager) * (1.0 - d);
            theta[mu] = d * theta[mu] + (1.0 - d) * th[mu];
            h[mu] = 1.0 / (cfg.delta + theta[mu]);
            g[mu] = (y[mu] - w[mu]) * h[mu];
        }
        op.backward_into(&g, &mut bg);
        op.backward_sq_into(&h, &mut bh);
        let mut delta = 0.0;
        for i in 0..n {
            let s2 = 1.0 / bh[i];
            let r = a[i] + bg[i] * s2;
            let (ai, vi) = den.denoise(r, s2);
            delta += (ai - a[i]).norm_sqr();
            a[i] = ai;
            v[i] = vi.max(VARIANCE_FLOOR);
        }
        delta /= n as f64;
        t += 1;
        if !delta.is_finite() {
            return Err(AmpError::NonFinite { t, snapshot: Box::new(super::AmpState {
                a: a.iter().map(|c| c.re).collect(),
                v: v.clone(),
                w: w.iter().map(|c| c.re).collect(),
                theta: theta.clone(),
                r: Vec::new(),
                sigma2: Vec::new(),
                t,
                delta,
            }) });
        }
        trace.push(TraceRow { t, delta, mse: truth.map(|s| complex_mse(&a, s)), ser: None, learned: Vec::new() });
        if delta < cfg.tol {
            converged = true;
            break;
        }
        let d0 = *first.get_or_insert(delta);
        if d0 > 0.0 && delta > cfg.divergence_factor * d0 {
            diverged = true;
            break;
        }
    }
    Ok(ComplexAmpResult { a, v, converged, diverged, iterations: t, trace })
}
