use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, PriorError, VARIANCE_FLOOR};
use crate::rng::{substream, tag};
use crate::special::ln_normal_pdf;

/// Superposition-code prior: every section of `B` entries holds exactly one
/// nonzero value `c_l`, uniformly placed. Powers are given per group; with
/// `G` groups and `L` sections, section `l` uses group `l * G / L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionPrior {
    b: usize,
    powers: Vec<f64>,
}

impl SectionPrior {
    pub fn new(b: usize) -> Result<Self, PriorError> {
        Self::with_powers(b, vec![1.0])
    }

    pub fn with_powers(b: usize, powers: Vec<f64>) -> Result<Self, PriorError> {
        if b < 2 {
            return Err(PriorError::InvalidParameter("section size must be >= 2".into()));
        }
        if powers.is_empty() || powers.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(PriorError::InvalidParameter("section powers must be positive".into()));
        }
        Ok(Self { b, powers })
    }

    pub fn section_size(&self) -> usize {
        self.b
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Nonzero value of section `l` out of `n_sections`.
    pub fn power_of(&self, l: usize, n_sections: usize) -> f64 {
        self.powers[l * self.powers.len() / n_sections.max(1)]
    }

    fn logits(c: f64, r: &[f64], s2: &[f64], out: &mut [f64]) {
        for ((o, &ri), &si) in out.iter_mut().zip(r).zip(s2) {
            *o = c * (2.0 * ri - c) / (2.0 * si);
        }
    }

    /// Posterior means and variances of one section with value `c`.
    pub fn denoise_section(c: f64, r: &[f64], s2: &[f64], a: &mut [f64], v: &mut [f64]) {
        Self::logits(c, r, s2, a);
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in a.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        for (ai, vi) in a.iter_mut().zip(v.iter_mut()) {
            *ai *= c / z;
            *vi = (*ai * (c - *ai)).max(VARIANCE_FLOOR);
        }
    }

    /// Draws `n_sections` sections; returns the signal and the 0-based
    /// position of the nonzero entry in each section.
    pub fn sample(&self, n_sections: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = substream(seed, &[tag::SIGNAL]);
        let pos: Vec<usize> = (0..n_sections).map(|_| rng.random_range(0..self.b)).collect();
        (self.signal_from_positions(&pos), pos)
    }

    pub fn signal_from_positions(&self, pos: &[usize]) -> Vec<f64> {
        let l = pos.len();
        let mut x = vec![0.0; l * self.b];
        for (s, &p) in pos.iter().enumerate() {
            x[s * self.b + p] = self.power_of(s, l);
        }
        x
    }

    /// Variance per entry under the prior, averaged over sections.
    pub fn variance(&self) -> f64 {
        let bf = self.b as f64;
        let c2: f64 = self.powers.iter().map(|c| c * c).sum::<f64>() / self.powers.len() as f64;
        c2 * (bf - 1.0) / (bf * bf)
    }
}

impl Denoiser for SectionPrior {
    fn denoise_into(&self, r: &[f64], sigma2: &[f64], a: &mut [f64], v: &mut [f64]) {
        let l = r.len() / self.b;
        for s in 0..l {
            let rg = s * self.b..(s + 1) * self.b;
            Self::denoise_section(
                self.power_of(s, l),
                &r[rg.clone()],
                &sigma2[rg.clone()],
                &mut a[rg.clone()],
                &mut v[rg],
            );
        }
    }

    fn init(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let l = n / self.b;
        let bf = self.b as f64;
        let mut a = vec![0.0; n];
        let mut v = vec![0.0; n];
        for s in 0..l {
            let c = self.power_of(s, l);
            for i in s * self.b..(s + 1) * self.b {
                a[i] = c / bf;
                v[i] = c * c * (bf - 1.0) / (bf * bf);
            }
        }
        (a, v)
    }

    fn log_evidence_sum(&self, r: &[f64], sigma2: &[f64]) -> f64 {
        let l = r.len() / self.b;
        let mut buf = vec![0.0; self.b];
        let mut total = 0.0;
        for s in 0..l {
            let rg = s * self.b..(s + 1) * self.b;
            let (rs, ss) = (&r[rg.clone()], &sigma2[rg]);
            Self::logits(self.power_of(s, l), rs, ss, &mut buf);
            let base: f64 = rs.iter().zip(ss).map(|(&ri, &si)| ln_normal_pdf(0.0, ri, si)).sum();
            total += base - (self.b as f64).ln() + crate::special::log_sum_exp(&buf);
        }
        total
    }
}
