//! Replica potentials, their maxima, transition finders and the large
//! section limit of superposition codes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::priors::BiGaussian;
use crate::state_evolution::{
    curve_turns, golden_max, log_grid, section_alpha, MmseMap, se_sigma, BiGaussianSe, Estimate, SeError, SectionMap,
};

pub mod large_b;

pub use crate::state_evolution::scalar::phi_generic;
pub use large_b::{capacity, phi_large_b, r_bp_infinity, Branch};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Se(#[from] SeError),
}

/// Bi-Gaussian potential up to `E`-independent constants.
pub fn phi_bigaussian(e: f64, rho: f64, eps: f64, alpha: f64, delta: f64) -> f64 {
    BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps)).phi(e, alpha, delta)
}

/// Potential of a superposition code with per-entry error `e`, up to
/// constants:
/// `-(alpha B/2)(ln(1/snr + BE) + (1 - BE)/(1/snr + BE)) + 1/(2 Sigma^2) + lse`.
pub fn phi_sections<M: SectionMap + ?Sized>(e: f64, map: &M, rate: f64, snr: f64) -> Result<Estimate, PotentialError> {
    let b = map.section_size();
    let bf = b as f64;
    let alpha = section_alpha(b, rate);
    let s2 = se_sigma(e, alpha, snr, b)?;
    let d = 1.0 / snr + bf * e;
    let lse = map.stats(s2).lse;
    let value = -0.5 * alpha * bf * (d.ln() + (1.0 - bf * e) / d) + 0.5 / s2 + lse.value;
    Ok(Estimate { value, se: lse.se })
}

/// One-parameter family of potentials `Phi(E; c)` over a control `c`
/// (measurement rate or code rate).
pub trait PotentialFamily: Sync {
    fn phi(&self, e: f64, control: f64) -> f64;
    /// Range of `E` scanned for maxima.
    fn e_range(&self) -> (f64, f64);
}

/// Bi-Gaussian family over the measurement rate `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct BiGaussianFamily {
    pub se: BiGaussianSe,
    pub delta: f64,
}

impl BiGaussianFamily {
    pub fn new(rho: f64, eps: f64, delta: f64) -> Self {
        Self { se: BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps)), delta }
    }
}

impl PotentialFamily for BiGaussianFamily {
    fn phi(&self, e: f64, alpha: f64) -> f64 {
        self.se.phi(e, alpha, self.delta)
    }
    fn e_range(&self) -> (f64, f64) {
        let eps = self.se.prior.sigma2sq;
        let lo = if eps > 1e-6 { 1e-2 * eps } else { 1e-8 };
        (lo, 2.0 * self.se.e0())
    }
}

/// Section family over the code rate `R`. Sharing one map across rates
/// makes Monte Carlo errors common to every curve.
pub struct SectionFamily<'a, M: SectionMap + ?Sized> {
    pub map: &'a M,
    pub snr: f64,
}

impl<M: SectionMap + ?Sized> PotentialFamily for SectionFamily<'_, M> {
    fn phi(&self, e: f64, rate: f64) -> f64 {
        phi_sections(e, self.map, rate, self.snr).map(|p| p.value).unwrap_or(f64::NAN)
    }
    fn e_range(&self) -> (f64, f64) {
        let b = self.map.section_size() as f64;
        (1e-8, 2.0 * (b - 1.0) / (b * b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    SingleMax,
    TwoMax,
}

/// Potential sampled on a log grid, with its located maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCurve {
    pub e: Vec<f64>,
    pub phi: Vec<f64>,
    /// `(E, Phi)` of each local maximum, increasing in `E`.
    pub maxima: Vec<(f64, f64)>,
    pub classification: Classification,
}

/// Grid size used by the transition finders.
pub const CURVE_POINTS: usize = 400;

impl PotentialCurve {
    pub fn evaluate<F: PotentialFamily + ?Sized>(family: &F, control: f64, points: usize) -> Self {
        let (lo, hi) = family.e_range();
        let e = log_grid(lo, hi, points);
        let phi: Vec<f64> = e.par_iter().map(|&x| family.phi(x, control)).collect();
        let n = phi.len();
        let mut cand: Vec<usize> = Vec::new();
        // an end of the grid counts when the potential rises towards it
        if phi[0] > phi[1] {
            cand.push(0);
        }
        for k in 1..n - 1 {
            if phi[k] >= phi[k - 1] && phi[k] > phi[k + 1] {
                cand.push(k);
            }
        }
        if phi[n - 1] > phi[n - 2] {
            cand.push(n - 1);
        }
        let cand = drop_shallow(&phi, cand);
        let maxima: Vec<(f64, f64)> = cand
            .iter()
            .map(|&k| {
                if k == 0 || k == n - 1 {
                    return (e[k], phi[k]);
                }
                let (x, v) = golden_max(|l| family.phi(l.exp(), control), e[k - 1].ln(), e[k + 1].ln(), 1e-6);
                (x.exp(), v)
            })
            .collect();
        let classification = if maxima.len() >= 2 { Classification::TwoMax } else { Classification::SingleMax };
        Self { e, phi, maxima, classification }
    }

    /// `Phi(low-error max) - Phi(high-error max)` when two maxima exist.
    pub fn height_gap(&self) -> Option<f64> {
        match (self.maxima.first(), self.maxima.last()) {
            (Some(a), Some(b)) if self.maxima.len() >= 2 => Some(a.1 - b.1),
            _ => None,
        }
    }

    /// The single maximum, or the global one.
    pub fn global_max(&self) -> Option<(f64, f64)> {
        self.maxima.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Removes maxima separated from a neighbour by a dip at rounding level.
fn drop_shallow(phi: &[f64], mut cand: Vec<usize>) -> Vec<usize> {
    loop {
        let mut merged = false;
        for i in 0..cand.len().saturating_sub(1) {
            let (a, b) = (cand[i], cand[i + 1]);
            let dip = phi[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
            let tol = 1e-11 * (1.0 + phi[a].abs().max(phi[b].abs()));
            if phi[a] - dip < tol || phi[b] - dip < tol {
                cand.remove(if phi[a] >= phi[b] { i + 1 } else { i });
                merged = true;
                break;
            }
        }
        if !merged {
            return cand;
        }
    }
}

/// Side of the control range where inference is easy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Easy {
    /// Large controls are easy (measurement rate).
    High,
    /// Small controls are easy (code rate).
    Low,
}

/// Transition location with the width of its final bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub value: f64,
    pub width: f64,
}

/// Transition values; absent entries mean the control range shows no
/// region with two maxima on that side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionSet {
    pub bp: Option<Transition>,
    pub opt: Option<Transition>,
    pub s: Option<Transition>,
}

/// Coarse scan points before bisection.
pub const SCAN_POINTS: usize = 41;

/// Scans `[lo, hi]` for the two-maxima region, then bisects its edges (BP on
/// the easy side, static on the hard side) and the sign change of the
/// height gap (optimal) down to `tol`.
pub fn find_transitions<F: PotentialFamily + ?Sized>(
    family: &F,
    lo: f64,
    hi: f64,
    easy: Easy,
    tol: f64,
) -> Result<TransitionSet, PotentialError> {
    if !(hi > lo) || !(tol > 0.0) {
        return Err(PotentialError::InvalidParameter("need lo < hi and tol > 0".into()));
    }
    // scan from the easy end so index order runs easy -> hard
    let at = |k: usize| {
        let t = k as f64 / (SCAN_POINTS - 1) as f64;
        match easy {
            Easy::High => hi - t * (hi - lo),
            Easy::Low => lo + t * (hi - lo),
        }
    };
    let curve = |c: f64| PotentialCurve::evaluate(family, c, CURVE_POINTS);
    let scan: Vec<PotentialCurve> = (0..SCAN_POINTS).map(|k| curve(at(k))).collect();
    let two: Vec<usize> = (0..SCAN_POINTS).filter(|&k| scan[k].classification == Classification::TwoMax).collect();
    let (first, last) = match (two.first(), two.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Ok(TransitionSet::default()),
    };
    let is_two = |c: f64| curve(c).classification == Classification::TwoMax;

    let bp = (first > 0).then(|| bisect(at(first - 1), at(first), tol, |c| is_two(c)));
    let s = (last + 1 < SCAN_POINTS).then(|| bisect(at(last), at(last + 1), tol, |c| !is_two(c)));

    // the gap is positive near BP and negative near the static edge
    let gap_at = |k: usize| scan[k].height_gap();
    let mut opt = None;
    for k in first..last {
        if let (Some(a), Some(b)) = (gap_at(k), gap_at(k + 1)) {
            if a > 0.0 && b <= 0.0 {
                opt = Some(bisect(at(k), at(k + 1), tol, |c| curve(c).height_gap().is_some_and(|g| g <= 0.0)));
                break;
            }
        }
    }
    if opt.is_none() {
        // the crossing may sit in the last cell before the static edge
        if let (Some(a), true) = (gap_at(last), last + 1 < SCAN_POINTS) {
            if a > 0.0 {
                if let Some(sv) = s {
                    opt = Some(bisect(at(last), sv.value, tol, |c| curve(c).height_gap().is_none_or(|g| g <= 0.0)));
                }
            }
        }
    }
    Ok(TransitionSet { bp, opt, s })
}

/// Bisection between `a` (predicate false) and `b` (predicate true).
fn bisect<P: FnMut(f64) -> bool>(mut a: f64, mut b: f64, tol: f64, mut pred: P) -> Transition {
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
    }
    Transition { value: 0.5 * (a + b), width: (b - a).abs() }
}

/// Spinodal and static rates from the turning values of the fixed-point
/// curve, an independent route to the BP and static transitions.
pub fn bigaussian_turns(rho: f64, eps: f64, delta: f64) -> (Option<f64>, Option<f64>) {
    let se = BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps));
    let s_min = if eps > 0.0 { 1e-3 * eps } else { 1e-10 }.max(1e-12);
    let t = curve_turns(&se, delta, s_min, 100.0, CURVE_POINTS);
    match (t.upper, t.lower) {
        (Some(u), Some(l)) if u > l => (Some(u), Some(l)),
        _ => (None, None),
    }
}

/// Smallest background variance with a two-maxima region, by bisection in
/// `ln eps` on `[lo, hi]`.
pub fn epsilon_c(rho: f64, delta: f64, lo: f64, hi: f64, rel_tol: f64) -> Result<Option<f64>, PotentialError> {
    let has = |eps: f64| bigaussian_turns(rho, eps, delta).0.is_some();
    if !has(lo) {
        return Ok(None);
    }
    if has(hi) {
        return Err(PotentialError::InvalidParameter(format!("still two maxima at eps = {hi}")));
    }
    let t = bisect(lo.ln(), hi.ln(), rel_tol, |l| !has(l.exp()));
    Ok(Some(t.value.exp()))
}
