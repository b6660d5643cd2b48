use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_grid, se_run, se_sigma, Acc, Estimate, MmseMap, SeConfig, SeError, SeRun, BATCH};
use crate::rng::{substream, tag};
use crate::special::{erfc, gaussian_expectation};

/// Measurement rate of a code with section size `b` and rate `r` bits per
/// channel use: `log2(B) / (R B)`.
pub fn section_alpha(b: usize, rate: f64) -> f64 {
    (b as f64).log2() / (rate * b as f64)
}

/// Channel averages for a unit section observed at per-entry variance
/// `Sigma^2`, with the true entry placed first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionStats {
    /// Per-entry squared error of the posterior mean.
    pub mse: Estimate,
    /// Per-entry posterior variance.
    pub var: Estimate,
    /// Probability that the largest posterior mean is not the true entry.
    pub ser: Estimate,
    /// `E ln(1 + sum_{i>=2} exp(-1/Sigma^2 + (z_i - z_1)/Sigma))`.
    pub lse: Estimate,
}

/// Source of section statistics as a function of `Sigma^2`.
pub trait SectionMap: Sync {
    fn section_size(&self) -> usize;
    fn stats(&self, sigma2: f64) -> SectionStats;
}

macro_rules! section_mmse {
    ($t:ty) => {
        impl MmseMap for $t {
            fn mmse(&self, sigma2: f64) -> Estimate {
                self.stats(sigma2).var
            }
            fn e0(&self) -> f64 {
                let b = self.section_size() as f64;
                (b - 1.0) / (b * b)
            }
        }
    };
}

/// Common-random-number Monte Carlo over `z ~ N(0, I_B)` with antithetic
/// pairs, evaluated at every `Sigma^2` in `sigma2` from the same draws.
pub fn section_mc(b: usize, sigma2: &[f64], samples: usize, seed: u64) -> Vec<SectionStats> {
    let k = sigma2.len();
    let pairs = samples.div_ceil(2).max(1);
    let batches = pairs.div_ceil(BATCH);
    let inv: Vec<(f64, f64)> = sigma2.iter().map(|&s| (1.0 / s, 1.0 / s.sqrt())).collect();
    let parts: Vec<Vec<[Acc; 4]>> = (0..batches)
        .into_par_iter()
        .map(|bt| {
            let mut rng = substream(seed, &[tag::MONTE_CARLO, 3, b as u64, bt as u64]);
            let mut acc = vec![[Acc::default(); 4]; k];
            let mut z = vec![0.0; b];
            let mut l = vec![0.0; b];
            for _ in 0..BATCH.min(pairs - bt * BATCH) {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (j, &(is2, is)) in inv.iter().enumerate() {
                    let up = one_section(&z, 1.0, is2, is, &mut l);
                    let dn = one_section(&z, -1.0, is2, is, &mut l);
                    for q in 0..4 {
                        acc[j][q].push(0.5 * (up[q] + dn[q]));
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![[Acc::default(); 4]; k];
    for p in &parts {
        for j in 0..k {
            for q in 0..4 {
                out[j][q].merge(&p[j][q]);
            }
        }
    }
    out.iter()
        .map(|a| SectionStats { mse: a[0].estimate(), var: a[1].estimate(), ser: a[2].estimate(), lse: a[3].estimate() })
        .collect()
}

/// `[mse, var, error, lse]` for one draw; `sign` flips the noise.
fn one_section(z: &[f64], sign: f64, inv_s2: f64, inv_s: f64, l: &mut [f64]) -> [f64; 4] {
    let b = z.len();
    for (li, &zi) in l.iter_mut().zip(z) {
        *li = sign * zi * inv_s;
    }
    l[0] += inv_s2;
    let mut top = l[0];
    let mut wrong = false;
    for &li in &l[1..] {
        if li > top {
            top = li;
        }
        if li > l[0] {
            wrong = true;
        }
    }
    let mut zsum = 0.0;
    for li in l.iter_mut() {
        *li = (*li - top).exp();
        zsum += *li;
    }
    let lse = zsum.ln() + top - (sign * z[0] * inv_s + inv_s2);
    let (mut mse, mut var) = (0.0, 0.0);
    for (i, &w) in l.iter().enumerate() {
        let p = w / zsum;
        let err = if i == 0 { 1.0 - p } else { p };
        mse += err * err;
        var += p * (1.0 - p);
    }
    let bf = b as f64;
    [mse / bf, var / bf, if wrong { 1.0 } else { 0.0 }, lse]
}

/// Direct Monte Carlo at each requested `Sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionMc {
    pub b: usize,
    pub samples: usize,
    pub seed: u64,
}

impl SectionMap for SectionMc {
    fn section_size(&self) -> usize {
        self.b
    }
    fn stats(&self, sigma2: f64) -> SectionStats {
        section_mc(self.b, &[sigma2], self.samples, self.seed)[0]
    }
}
section_mmse!(SectionMc);

/// Statistics tabulated on a log grid of `Sigma^2` from one set of draws,
/// interpolated linearly in `ln Sigma^2`. Queries outside the grid return
/// the nearest end value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTable {
    pub b: usize,
    pub sigma2: Vec<f64>,
    pub stats: Vec<SectionStats>,
}

impl SectionTable {
    pub fn build(b: usize, s2_min: f64, s2_max: f64, points: usize, samples: usize, seed: u64) -> Self {
        let sigma2 = log_grid(s2_min, s2_max, points);
        let stats = section_mc(b, &sigma2, samples, seed);
        Self { b, sigma2, stats }
    }

    /// Grid wide enough for every rate in `[r_lo, r_hi]` at this `snr`.
    pub fn for_rates(b: usize, snr: f64, r_lo: f64, r_hi: f64, points: usize, samples: usize, seed: u64) -> Self {
        let bf = b as f64;
        let e0 = (bf - 1.0) / (bf * bf);
        let lo = 0.5 / (bf * snr) / section_alpha(b, r_lo);
        let hi = 1.5 * (1.0 / (bf * snr) + e0) / section_alpha(b, r_hi);
        Self::build(b, lo, hi, points, samples, seed)
    }
}

impl SectionMap for SectionTable {
    fn section_size(&self) -> usize {
        self.b
    }
    fn stats(&self, sigma2: f64) -> SectionStats {
        let n = self.sigma2.len();
        if sigma2 <= self.sigma2[0] {
            return self.stats[0];
        }
        if sigma2 >= self.sigma2[n - 1] {
            return self.stats[n - 1];
        }
        let k = self.sigma2.partition_point(|&s| s <= sigma2) - 1;
        let (a, b) = (self.sigma2[k].ln(), self.sigma2[k + 1].ln());
        let t = (sigma2.ln() - a) / (b - a);
        let mix = |x: Estimate, y: Estimate| Estimate {
            value: x.value + t * (y.value - x.value),
            se: x.se.max(y.se),
        };
        let (p, q) = (self.stats[k], self.stats[k + 1]);
        SectionStats { mse: mix(p.mse, q.mse), var: mix(p.var, q.var), ser: mix(p.ser, q.ser), lse: mix(p.lse, q.lse) }
    }
}
section_mmse!(SectionTable);

/// Exact statistics for `B = 2`, where only `u = (z_2 - z_1)/sqrt(2)`
/// matters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionsB2;

impl SectionMap for SectionsB2 {
    fn section_size(&self) -> usize {
        2
    }
    fn stats(&self, sigma2: f64) -> SectionStats {
        let s = sigma2.sqrt();
        let x = |u: f64| -1.0 / sigma2 + std::f64::consts::SQRT_2 * u / s;
        let u0 = 1.0 / (std::f64::consts::SQRT_2 * s);
        let p2 = |u: f64| 1.0 / (1.0 + (-x(u)).exp());
        let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
        let brk = if u0 < 40.0 { vec![u0] } else { vec![] };
        let mse = gaussian_expectation(|u| p2(u).powi(2), &brk, 1e-14);
        let var = gaussian_expectation(|u| p2(u) * (1.0 - p2(u)), &brk, 1e-14);
        let lse = gaussian_expectation(|u| softplus(x(u)), &brk, 1e-14);
        SectionStats {
            mse: Estimate::exact(mse),
            var: Estimate::exact(var),
            ser: Estimate::exact(0.5 * erfc(1.0 / (2.0 * s))),
            lse: Estimate::exact(lse),
        }
    }
}
section_mmse!(SectionsB2);

/// One step of the section recursion: per-entry error and SER.
pub fn se_step_sections(e: f64, b: usize, rate: f64, snr: f64, cfg: &SeConfig) -> Result<(Estimate, Estimate), SeError> {
    if b < 2 {
        return Err(SeError::InvalidParameter("section size must be >= 2".into()));
    }
    let s2 = se_sigma(e, section_alpha(b, rate), snr, b)?;
    let st = SectionMc { b, samples: cfg.mc_samples, seed: cfg.seed }.stats(s2);
    Ok((st.var, st.ser))
}

/// Section recursion at rate `rate`, started from `e_init`.
pub fn se_run_sections<M: SectionMap + ?Sized>(
    map: &M,
    rate: f64,
    snr: f64,
    e_init: f64,
    tol: f64,
    t_max: usize,
) -> Result<SeRun, SeError> {
    let b = map.section_size();
    let alpha = section_alpha(b, rate);
    se_run(|e| Ok(vec![map.stats(se_sigma(e[0], alpha, snr, b)?).var.value]), vec![e_init], tol, t_max)
}

/// Whether the recursion from the prior variance reaches the same fixed
/// point as the one started from zero error.
pub fn sections_succeed<M: SectionMap + ?Sized>(map: &M, rate: f64, snr: f64, t_max: usize) -> Result<bool, SeError> {
    let b = map.section_size() as f64;
    let e0 = (b - 1.0) / (b * b);
    let top = se_run_sections(map, rate, snr, e0, 1e-14, t_max)?;
    let bottom = se_run_sections(map, rate, snr, 0.0, 1e-14, t_max)?;
    Ok(top.last()[0] <= bottom.last()[0] + 1e-3 * e0)
}

/// Largest rate at which the recursion from the prior variance succeeds.
/// A 40-step scan up from `r_lo` (which must succeed) finds the first
/// failing rate, then bisection narrows that cell to `tol`. Past the static
/// point both starts share one high-error fixed point, so only the first
/// failure from the easy side is meaningful.
pub fn sections_rate_bp<M: SectionMap + ?Sized>(
    map: &M,
    snr: f64,
    r_lo: f64,
    r_hi: f64,
    tol: f64,
) -> Result<f64, SeError> {
    let t_max = 200_000;
    if !sections_succeed(map, r_lo, snr, t_max)? {
        return Err(SeError::InvalidParameter(format!("recursion already fails at R = {r_lo}")));
    }
    let steps = 40;
    let at = |k: usize| r_lo + (r_hi - r_lo) * k as f64 / steps as f64;
    let first_fail = (1..=steps)
        .map(|k| sections_succeed(map, at(k), snr, t_max).map(|ok| (k, ok)))
        .find(|r| !matches!(r, Ok((_, true))))
        .transpose()?
        .ok_or_else(|| SeError::InvalidParameter(format!("no failure up to R = {r_hi}")))?;
    let (mut lo, mut hi) = (at(first_fail.0 - 1), at(first_fail.0));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if sections_succeed(map, mid, snr, t_max)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
