use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{se_sigma_delta, Acc, Estimate, SeConfig, BATCH};
use crate::priors::{ComplexBernoulliGauss, ComplexDenoiser};
use crate::rng::{substream, tag};

/// One step of the complex recursion, per real dimension:
/// `E' = E f_c(s + Sigma (z1 + i z2))` with `Sigma^2 = (delta + E) / alpha`.
pub fn se_step_complex(e: f64, prior: &ComplexBernoulliGauss, alpha: f64, delta: f64, cfg: &SeConfig) -> Estimate {
    let s2 = se_sigma_delta(e, alpha, delta);
    let sd = s2.sqrt();
    let pairs = cfg.mc_samples.div_ceil(2).max(1);
    let batches = pairs.div_ceil(BATCH);
    let parts: Vec<Acc> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, &[tag::MONTE_CARLO, 4, b as u64]);
            let ps = prior.sigma2.sqrt();
            let mut acc = Acc::default();
            for _ in 0..BATCH.min(pairs - b * BATCH) {
                let s = if rng.random::<f64>() < prior.rho {
                    let (a, c): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                    prior.mean + Complex64::new(ps * a, ps * c)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sd;
                let up = prior.denoise(s + z, s2).1;
                let dn = prior.denoise(s - z, s2).1;
                acc.push(0.5 * (up + dn));
            }
            acc
        })
        .collect();
    let mut out = Acc::default();
    for p in &parts {
        out.merge(p);
    }
    out.estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::BiGaussian;
    use crate::special::integrate;
    use crate::state_evolution::BiGaussianSe;

    #[test]
    fn empty_prior_has_no_error() {
        let p = ComplexBernoulliGauss::new(0.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let cfg = SeConfig { mc_samples: 1000, ..Default::default() };
        assert!(se_step_complex(0.05, &p, 0.3, 0.0, &cfg).value < 1e-18);
    }

    #[test]
    fn radial_quadrature_oracle() {
        // with zero mean the posterior variance only depends on |r|, and
        // |r|^2 / (2 t) is a unit exponential under each component
        let (rho, alpha, e) = (0.1, 0.3, 0.05);
        let p = ComplexBernoulliGauss::new(rho, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let s2 = e / alpha;
        let radial = |t: f64| {
            integrate(
                |u| (-u).exp() * p.denoise(Complex64::new((2.0 * t * u).sqrt(), 0.0), s2).1,
                0.0,
                60.0,
                &[0.5, 2.0, 8.0],
                0.0,
                1e-12,
            )
        };
        let want = rho * radial(1.0 + s2) + (1.0 - rho) * radial(s2);
        let cfg = SeConfig { mc_samples: 1_000_000, seed: 7, ..Default::default() };
        let got = se_step_complex(e, &p, alpha, 0.0, &cfg);
        assert!(got.agrees(&Estimate::exact(want), 3.0), "{got:?} vs {want}");
        // joint sparsity of the two parts makes the complex step differ from
        // the real one at the same parameters
        let real = BiGaussianSe::new(BiGaussian::approx_sparse(rho, 0.0)).mmse_at(s2);
        assert!((real - want).abs() > 10.0 * got.se, "{real} {want}");
    }
}
