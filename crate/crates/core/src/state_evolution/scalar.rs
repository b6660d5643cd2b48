use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{se_sigma_delta, Acc, Estimate, MmseMap, Quadrature, SeConfig, BATCH};
use crate::priors::{denoise_bigaussian, BiGaussian, ScalarPrior};
use crate::rng::{substream, tag};
use crate::special::{gaussian_expectation, GaussHermite, LN_2PI};

/// Closed-form recursion and potential for the prior
/// `rho N(0, s1) + (1 - rho) N(0, s2)`, with 1-D Gaussian integrals done
/// by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiGaussianSe {
    pub prior: BiGaussian,
    pub quadrature: Quadrature,
}

impl BiGaussianSe {
    pub fn new(prior: BiGaussian) -> Self {
        Self { prior, quadrature: Quadrature::Adaptive }
    }

    pub fn with_quadrature(prior: BiGaussian, quadrature: Quadrature) -> Self {
        Self { prior, quadrature }
    }

    fn components(&self) -> [(f64, f64); 2] {
        let p = &self.prior;
        [(p.rho, p.sigma1sq), (1.0 - p.rho, p.sigma2sq)]
    }

    /// Field value where both posterior components weigh the same.
    fn switch_point(&self, sigma2: f64) -> Option<f64> {
        let p = &self.prior;
        if p.rho <= 0.0 || p.rho >= 1.0 || p.sigma1sq == p.sigma2sq {
            return None;
        }
        let (t1, t2) = (sigma2 + p.sigma1sq, sigma2 + p.sigma2sq);
        let num = (p.rho / (1.0 - p.rho)).ln() - 0.5 * (t1 / t2).ln();
        let r2 = 2.0 * num / (1.0 / t1 - 1.0 / t2);
        (r2 > 0.0).then(|| r2.sqrt())
    }

    /// `E f(r)` for `r ~ N(0, t)`.
    fn expect<F: Fn(f64) -> f64>(&self, t: f64, sigma2: f64, f: F) -> f64 {
        let sd = t.sqrt();
        match self.quadrature {
            Quadrature::Hermite61 => GaussHermite::order61().expect(|z| f(sd * z)),
            Quadrature::Adaptive => {
                let mut breaks = Vec::new();
                if let Some(rs) = self.switch_point(sigma2) {
                    let zs = rs / sd;
                    if zs < 40.0 {
                        breaks.extend_from_slice(&[-zs, zs]);
                    }
                }
                gaussian_expectation(|z| f(sd * z), &breaks, 1e-13)
            }
        }
    }

    /// Posterior variance averaged over the channel, `E f_c(s + Sigma z)`.
    pub fn mmse_at(&self, sigma2: f64) -> f64 {
        if sigma2 <= 0.0 {
            return 0.0;
        }
        let p = self.prior;
        self.components()
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|&(w, v)| {
                w * self.expect(v + sigma2, sigma2, |r| denoise_bigaussian(p.rho, p.sigma1sq, p.sigma2sq, r, sigma2).1)
            })
            .sum()
    }

    /// Replica potential, up to `E`-independent constants:
    /// `-(alpha/2)(ln(delta + E) + (<s^2> - E)/(delta + E)) + E ln Z(Sigma^2)`.
    /// The `<s^2>/Sigma^2` pieces of both terms are cancelled analytically.
    pub fn phi(&self, e: f64, alpha: f64, delta: f64) -> f64 {
        let s2 = se_sigma_delta(e, alpha, delta);
        let d = delta + e;
        let mut total = -0.5 * alpha * (d.ln() - e / d) + 0.5 * (LN_2PI + s2.ln());
        for &(w, v) in self.components().iter().filter(|(w, _)| *w > 0.0) {
            let t = v + s2;
            // ln evidence + r^2/(2t) stays O(1) for r ~ N(0, t)
            let inner = self.expect(t, s2, |r| self.prior.log_evidence(r, s2) + r * r / (2.0 * t));
            total += w * inner;
        }
        total
    }

    /// `dPhi/dE = (alpha/2) (m(Sigma^2) - E) / (delta + E)^2`.
    pub fn dphi(&self, e: f64, alpha: f64, delta: f64) -> f64 {
        let m = self.mmse_at(se_sigma_delta(e, alpha, delta));
        0.5 * alpha * (m - e) / (delta + e).powi(2)
    }
}

impl MmseMap for BiGaussianSe {
    fn mmse(&self, sigma2: f64) -> Estimate {
        Estimate::exact(self.mmse_at(sigma2))
    }
    fn e0(&self) -> f64 {
        self.prior.variance()
    }
}

/// One step of the bi-Gaussian recursion.
pub fn se_step_bigaussian(e: f64, prior: &BiGaussian, alpha: f64, delta: f64, quadrature: Quadrature) -> f64 {
    BiGaussianSe::with_quadrature(*prior, quadrature).mmse_at(se_sigma_delta(e, alpha, delta))
}

/// Equivalent forms of the scalar recursion under a matched prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeForm {
    /// `E (f_a - s)^2`.
    Mse,
    /// `<s^2> - E f_a^2`.
    Moment,
    /// `E f_c`.
    #[default]
    Variance,
}

/// All three forms from the same antithetic samples `(s, +-z)`, with `s`
/// drawn from `truth` and the denoiser taken from `den`.
pub fn se_forms_generic<P, Q>(truth: &P, den: &Q, sigma2: f64, cfg: &SeConfig) -> [Estimate; 3]
where
    P: ScalarPrior + ?Sized,
    Q: ScalarPrior + ?Sized,
{
    let accs = mc_pairs(truth, den, sigma2, cfg, |s, (a, c)| [(a - s) * (a - s), s * s - a * a, c]);
    [accs[0].estimate(), accs[1].estimate(), accs[2].estimate()]
}

/// Batched antithetic sampler; `f` maps `(s, (f_a, f_c))` to the tracked
/// quantities and every pair contributes the average of its two draws.
fn mc_pairs<P, Q, F, const K: usize>(truth: &P, den: &Q, sigma2: f64, cfg: &SeConfig, f: F) -> [Acc; K]
where
    P: ScalarPrior + ?Sized,
    Q: ScalarPrior + ?Sized,
    F: Fn(f64, (f64, f64)) -> [f64; K] + Sync,
{
    let pairs = cfg.mc_samples.div_ceil(2).max(1);
    let batches = pairs.div_ceil(BATCH);
    let sd = sigma2.sqrt();
    let parts: Vec<[Acc; K]> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, &[tag::MONTE_CARLO, 1, b as u64]);
            let mut acc = [Acc::default(); K];
            let n = BATCH.min(pairs - b * BATCH);
            for _ in 0..n {
                let s = truth.sample_one(&mut rng);
                let z: f64 = rng.sample(StandardNormal);
                let up = f(s, den.denoise(s + sd * z, sigma2));
                let dn = f(s, den.denoise(s - sd * z, sigma2));
                for k in 0..K {
                    acc[k].push(0.5 * (up[k] + dn[k]));
                }
            }
            acc
        })
        .collect();
    let mut out = [Acc::default(); K];
    for p in &parts {
        for k in 0..K {
            out[k].merge(&p[k]);
        }
    }
    out
}

/// One step of the scalar recursion for any prior, by Monte Carlo.
pub fn se_step_generic<P: ScalarPrior + ?Sized>(
    e: f64,
    prior: &P,
    alpha: f64,
    delta: f64,
    form: SeForm,
    cfg: &SeConfig,
) -> Estimate {
    let s2 = se_sigma_delta(e, alpha, delta);
    let forms = se_forms_generic(prior, prior, s2, cfg);
    match form {
        SeForm::Mse => forms[0],
        SeForm::Moment => forms[1],
        SeForm::Variance => forms[2],
    }
}

/// Replica potential of a scalar prior with the inner average by Monte
/// Carlo (same constants as [`BiGaussianSe::phi`]).
pub fn phi_generic<P: ScalarPrior + ?Sized>(e: f64, prior: &P, alpha: f64, delta: f64, cfg: &SeConfig) -> Estimate {
    let s2 = se_sigma_delta(e, alpha, delta);
    let d = delta + e;
    let accs = mc_log_evidence(prior, s2, cfg);
    let est = accs.estimate();
    let base = -0.5 * alpha * (d.ln() - e / d) + 0.5 * (LN_2PI + s2.ln()) + 0.5;
    Estimate { value: base + est.value, se: est.se }
}

fn mc_log_evidence<P: ScalarPrior + ?Sized>(prior: &P, sigma2: f64, cfg: &SeConfig) -> Acc {
    let pairs = cfg.mc_samples.div_ceil(2).max(1);
    let batches = pairs.div_ceil(BATCH);
    let sd = sigma2.sqrt();
    let parts: Vec<Acc> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, &[tag::MONTE_CARLO, 2, b as u64]);
            let mut acc = Acc::default();
            for _ in 0..BATCH.min(pairs - b * BATCH) {
                let s = prior.sample_one(&mut rng);
                let z: f64 = rng.sample(StandardNormal);
                let a = prior.log_evidence(s + sd * z, sigma2);
                let c = prior.log_evidence(s - sd * z, sigma2);
                acc.push(0.5 * (a + c));
            }
            acc
        })
        .collect();
    let mut out = Acc::default();
    for p in &parts {
        out.merge(p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NishimoriReport {
    pub e_form: Estimate,
    pub v_form: Estimate,
    /// Paired difference `E - V`.
    pub diff: Estimate,
    pub matched: bool,
}

/// Compares the squared-error and posterior-variance forms of one step. They
/// agree when `den` is the prior the signal was drawn from.
pub fn nishimori_check<P, Q>(truth: &P, den: &Q, e: f64, alpha: f64, delta: f64, cfg: &SeConfig) -> NishimoriReport
where
    P: ScalarPrior + ?Sized,
    Q: ScalarPrior + ?Sized,
{
    let s2 = se_sigma_delta(e, alpha, delta);
    let accs = mc_pairs(truth, den, s2, cfg, |s, (a, c)| [(a - s) * (a - s), c, (a - s) * (a - s) - c]);
    let diff = accs[2].estimate();
    NishimoriReport {
        e_form: accs[0].estimate(),
        v_form: accs[1].estimate(),
        diff,
        matched: diff.value.abs() <= 3.0 * diff.se + 1e-15,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{MixtureComponent, MixturePrior};

    fn bg(rho: f64, eps: f64) -> BiGaussianSe {
        BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps))
    }

    #[test]
    fn zero_signal_gives_zero_error() {
        let m = bg(0.0, 0.0);
        assert!(m.mmse_at(0.3) < 1e-18);
        assert!(se_step_bigaussian(0.1, &BiGaussian::approx_sparse(0.0, 0.0), 0.3, 0.0, Quadrature::Adaptive) < 1e-18);
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let p = BiGaussian::approx_sparse(0.2, 1e-4);
        let s2 = 0.01;
        let exact = bg(0.2, 1e-4).mmse_at(s2);
        let cfg = SeConfig { mc_samples: 2_000_000, seed: 9, ..Default::default() };
        let mc = se_forms_generic(&p, &p, s2, &cfg);
        for f in &mc {
            assert!(f.agrees(&Estimate::exact(exact), 3.0), "{f:?} vs {exact}");
        }
    }

    #[test]
    fn hermite_and_adaptive_rules_on_a_smooth_case() {
        let p = BiGaussian::approx_sparse(0.3, 0.5);
        let a = BiGaussianSe::with_quadrature(p, Quadrature::Adaptive).mmse_at(1.0);
        let h = BiGaussianSe::with_quadrature(p, Quadrature::Hermite61).mmse_at(1.0);
        assert!((a - h).abs() < 1e-8 * a, "{a} {h}");
    }

    #[test]
    fn potential_slope_is_the_fixed_point_residual() {
        let m = bg(0.2, 1e-6);
        for &(e, alpha) in &[(1e-4, 0.3), (0.05, 0.28), (0.15, 0.4), (3e-6, 0.36)] {
            let h = 1e-4 * e;
            let fd = (m.phi(e + h, alpha, 0.0) - m.phi(e - h, alpha, 0.0)) / (2.0 * h);
            let an = m.dphi(e, alpha, 0.0);
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "E={e}: {fd} vs {an}");
        }
    }

    #[test]
    fn mc_potential_matches_quadrature() {
        let p = BiGaussian::approx_sparse(0.2, 0.01);
        let cfg = SeConfig { mc_samples: 400_000, seed: 3, ..Default::default() };
        for &e in &[0.01, 0.1] {
            let q = BiGaussianSe::new(p).phi(e, 0.4, 1e-3);
            let mc = phi_generic(e, &p, 0.4, 1e-3, &cfg);
            assert!(mc.agrees(&Estimate::exact(q), 3.0), "{mc:?} vs {q}");
        }
    }

    #[test]
    fn nishimori_forms_and_negative_control() {
        let cfg = SeConfig { mc_samples: 400_000, seed: 1, ..Default::default() };
        let dirac = MixturePrior::new(vec![MixtureComponent::Dirac { m: 0.0, weight: 1.0 }]).unwrap();
        let r = nishimori_check(&dirac, &dirac, 0.1, 0.5, 0.0, &cfg);
        assert!(r.matched && r.e_form.value == 0.0);
        let p = BiGaussian::approx_sparse(0.2, 1e-3);
        assert!(nishimori_check(&p, &p, 0.05, 0.35, 0.0, &cfg).matched);
        let wrong = BiGaussian::approx_sparse(0.05, 1e-3);
        assert!(!nishimori_check(&p, &wrong, 0.05, 0.35, 0.0, &cfg).matched);
    }
}
