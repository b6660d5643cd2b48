//! Large-system recursions for the AMP error: scalar, section, complex,
//! spatially-coupled and power-allocated forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::OperatorError;

pub mod complex;
pub mod coupled;
pub mod scalar;
pub mod sections;

pub use complex::se_step_complex;
pub use coupled::{coupled_sigma2, se_step_coupled, se_step_power_allocated, CoupledSe};
pub use scalar::{nishimori_check, se_forms_generic, se_step_bigaussian, se_step_generic, BiGaussianSe, NishimoriReport, SeForm};
pub use sections::{
    section_alpha, se_step_sections, SectionMap, SectionMc, SectionStats, SectionTable, SectionsB2,
};

#[derive(Debug, Error)]
pub enum SeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// How one-dimensional Gaussian integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Fixed 61-point Gauss-Hermite rule.
    Hermite61,
    /// Adaptive Gauss-Kronrod with breakpoints at the denoiser switch.
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeConfig {
    pub mc_samples: usize,
    pub seed: u64,
    /// Stop once `max |E^{t+1} - E^t|` falls below this.
    pub tol: f64,
    pub t_max: usize,
    pub quadrature: Quadrature,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self { mc_samples: 1_000_000, seed: 0, tol: 1e-10, t_max: 10_000, quadrature: Quadrature::Adaptive }
    }
}

/// Monte Carlo estimate with its standard error; deterministic values carry
/// `se = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// `|a - b| <= k` combined standard errors.
    pub fn agrees(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * (self.se * self.se + other.se * other.se).sqrt()
    }
}

/// Running mean and variance of independent draws.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Acc {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Acc {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sq += x * x;
    }

    pub(crate) fn merge(&mut self, o: &Acc) {
        self.n += o.n;
        self.sum += o.sum;
        self.sq += o.sq;
    }

    pub(crate) fn estimate(&self) -> Estimate {
        if self.n == 0.0 {
            return Estimate::default();
        }
        let mean = self.sum / self.n;
        let var = (self.sq / self.n - mean * mean).max(0.0);
        let se = if self.n > 1.0 { (var / (self.n - 1.0)).sqrt() } else { 0.0 };
        Estimate { value: mean, se }
    }
}

/// Number of samples per reproducible Monte Carlo batch.
pub(crate) const BATCH: usize = 1 << 13;

/// Effective variance `Sigma^2 = (1/(B snr) + E) / alpha`.
pub fn se_sigma(e: f64, alpha: f64, snr: f64, b: usize) -> Result<f64, SeError> {
    if !(alpha > 0.0) {
        return Err(SeError::InvalidParameter("alpha must be positive".into()));
    }
    if !(snr > 0.0) || b == 0 {
        return Err(SeError::InvalidParameter("snr must be positive and B >= 1".into()));
    }
    Ok((1.0 / (b as f64 * snr) + e) / alpha)
}

/// Same with the noise variance given directly: `(delta + E) / alpha`.
pub fn se_sigma_delta(e: f64, alpha: f64, delta: f64) -> f64 {
    (delta + e) / alpha
}

/// Per-entry posterior error of a scalar channel at a given `Sigma^2`.
pub trait MmseMap: Sync {
    fn mmse(&self, sigma2: f64) -> Estimate;
    /// Prior variance per entry, the recursion's starting point.
    fn e0(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeRun {
    /// States after each iteration, the initial one first.
    pub trajectory: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl SeRun {
    pub fn last(&self) -> &[f64] {
        self.trajectory.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// The two final states, which differ when the run ended in a cycle.
    pub fn last_two(&self) -> (&[f64], &[f64]) {
        let n = self.trajectory.len();
        let prev = if n >= 2 { &self.trajectory[n - 2] } else { &self.trajectory[n - 1] };
        (prev, &self.trajectory[n - 1])
    }
}

/// Iterates `step` from `init` until the largest change drops below `tol`.
pub fn se_run<F>(mut step: F, init: Vec<f64>, tol: f64, t_max: usize) -> Result<SeRun, SeError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, SeError>,
{
    let mut trajectory = vec![init];
    let mut converged = false;
    let mut t = 0;
    while t < t_max {
        let cur = trajectory.last().unwrap();
        let next = step(cur)?;
        t += 1;
        let change = next.iter().zip(cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(SeError::InvalidParameter(format!("non-finite state at iteration {t}")));
        }
        trajectory.push(next);
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(SeRun { trajectory, converged, iterations: t })
}

/// Homogeneous scalar recursion `E <- m((delta + E) / alpha)` from `e_init`.
pub fn se_run_scalar<M: MmseMap + ?Sized>(
    map: &M,
    alpha: f64,
    delta: f64,
    e_init: f64,
    tol: f64,
    t_max: usize,
) -> Result<SeRun, SeError> {
    if !(alpha > 0.0) {
        return Err(SeError::InvalidParameter("alpha must be positive".into()));
    }
    se_run(|e| Ok(vec![map.mmse(se_sigma_delta(e[0], alpha, delta)).value]), vec![e_init], tol, t_max)
}

/// Turning values of the fixed-point curve `alpha(Sigma^2) = (delta +
/// m(Sigma^2)) / Sigma^2`. Fixed points at rate `alpha` are the crossings
/// of this curve; a local maximum followed (towards small `Sigma^2`) by a
/// local minimum marks a range with three fixed points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTurns {
    /// Largest local maximum of the curve.
    pub upper: Option<f64>,
    /// Smallest local minimum of the curve.
    pub lower: Option<f64>,
}

pub fn fixed_point_curve<M: MmseMap + ?Sized>(map: &M, delta: f64, sigma2: &[f64]) -> Vec<f64> {
    sigma2.iter().map(|&s| (delta + map.mmse(s).value) / s).collect()
}

/// Locates the turning values on a log grid, refining each one by
/// golden-section search.
pub fn curve_turns<M: MmseMap + ?Sized>(map: &M, delta: f64, s_min: f64, s_max: f64, points: usize) -> CurveTurns {
    let grid = log_grid(s_min, s_max, points);
    let a = fixed_point_curve(map, delta, &grid);
    let f = |ls: f64| {
        let s = ls.exp();
        (delta + map.mmse(s).value) / s
    };
    let mut turns = CurveTurns::default();
    for k in 1..a.len() - 1 {
        let (lo, hi) = (grid[k - 1].ln(), grid[k + 1].ln());
        if a[k] > a[k - 1] && a[k] >= a[k + 1] {
            let (_, v) = golden_max(|x| f(x), lo, hi, 1e-10);
            turns.upper = Some(turns.upper.map_or(v, |u: f64| u.max(v)));
        } else if a[k] < a[k - 1] && a[k] <= a[k + 1] {
            let (_, v) = golden_max(|x| -f(x), lo, hi, 1e-10);
            turns.lower = Some(turns.lower.map_or(-v, |u: f64| u.min(-v)));
        }
    }
    turns
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Golden-section search for a maximum of `f` on `[a, b]`; returns the
/// argument and the value.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
