use proptest::prelude::*;
use sparse_amp::priors::*;

/// Posterior mean and variance by brute-force Simpson integration of the
/// prior density against the Gaussian likelihood. Point masses are added
/// in closed form.
fn brute_posterior(comps: &[MixtureComponent], r: f64, s2: f64) -> (f64, f64) {
    let lik = |x: f64| (-(x - r).powi(2) / (2.0 * s2)).exp();
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    let mut add = |w: f64, x: f64| {
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    };
    for c in comps {
        match *c {
            MixtureComponent::Dirac { m, weight } => add(weight * lik(m), m),
            _ => {
                let dens = |x: f64, upper: bool| match *c {
                    MixtureComponent::Gauss { m, v, weight } => {
                        weight * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
                    }
                    MixtureComponent::Exponential { lambda, weight } => {
                        if x > 0.0 || (x == 0.0 && upper) {
                            weight * lambda * (-lambda * x).exp()
                        } else {
                            0.0
                        }
                    }
                    MixtureComponent::Laplace { beta, weight } => weight * 0.5 * beta * (-beta * x.abs()).exp(),
                    _ => unreachable!(),
                };
                // split at zero where the exponential and Laplace densities kink;
                // each side uses its own one-sided limit at the split
                for (lo, hi, upper) in [(-40.0, 0.0, false), (0.0, 40.0, true)] {
                    let k = 40_000;
                    let h: f64 = (hi - lo) / k as f64;
                    for i in 0..=k {
                        let x = lo + i as f64 * h;
                        let wgt = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                        add(wgt * h / 3.0 * dens(x, upper) * lik(x), x);
                    }
                }
            }
        }
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

fn component() -> impl Strategy<Value = MixtureComponent> {
    prop_oneof![
        (-1.0f64..1.0).prop_map(|m| MixtureComponent::Dirac { m, weight: 1.0 }),
        (-1.0f64..1.0, 0.2f64..2.0).prop_map(|(m, v)| MixtureComponent::Gauss { m, v, weight: 1.0 }),
        (0.5f64..3.0).prop_map(|lambda| MixtureComponent::Exponential { lambda, weight: 1.0 }),
        (0.5f64..3.0).prop_map(|beta| MixtureComponent::Laplace { beta, weight: 1.0 }),
    ]
}

fn mixture() -> impl Strategy<Value = Vec<MixtureComponent>> {
    (prop::collection::vec(component(), 1..4), prop::collection::vec(0.1f64..1.0, 3)).prop_map(|(mut cs, ws)| {
        let total: f64 = ws.iter().take(cs.len()).sum();
        for (c, w) in cs.iter_mut().zip(&ws) {
            c.set_weight(w / total);
        }
        cs
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mixture_denoiser_matches_quadrature(comps in mixture(), r in -3.0f64..3.0, s2 in 0.1f64..2.0) {
        let prior = MixturePrior::new(comps.clone()).unwrap();
        let (a, v) = prior.denoise(r, s2);
        let (a0, v0) = brute_posterior(&comps, r, s2);
        prop_assert!((a - a0).abs() < 1e-6, "mean {a} vs {a0}");
        prop_assert!((v - v0).abs() < 1e-6, "var {v} vs {v0}");
    }

    #[test]
    fn mixture_derivative_identity(comps in mixture(), r in -3.0f64..3.0, s2 in 0.1f64..2.0) {
        let prior = MixturePrior::new(comps).unwrap();
        let h = 1e-5;
        let d = (prior.denoise(r + h, s2).0 - prior.denoise(r - h, s2).0) / (2.0 * h);
        let v = prior.denoise(r, s2).1;
        prop_assert!((s2 * d - v).abs() <= 1e-4 * v.abs() + 1e-9, "{} vs {v}", s2 * d);
    }

    #[test]
    fn bigaussian_derivative_identity(rho in 0.01f64..0.99, eps in 1e-4f64..0.5, r in -3.0f64..3.0, s2 in 0.01f64..2.0) {
        let p = BiGaussian::approx_sparse(rho, eps);
        let h = 1e-5 * s2.sqrt();
        let d = (p.denoise(r + h, s2).0 - p.denoise(r - h, s2).0) / (2.0 * h);
        let v = p.denoise(r, s2).1;
        prop_assert!((s2 * d - v).abs() <= 1e-4 * v, "{} vs {v}", s2 * d);
    }

    #[test]
    fn section_derivative_identity(b in 2usize..9, c in 0.3f64..2.0, s2 in 0.05f64..2.0, seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..b).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let s = vec![s2; b];
        let (mut a, mut v) = (vec![0.0; b], vec![0.0; b]);
        SectionPrior::denoise_section(c, &r, &s, &mut a, &mut v);
        let h = 1e-5;
        for i in 0..b {
            let (mut ap, mut am, mut tmp) = (vec![0.0; b], vec![0.0; b], vec![0.0; b]);
            let mut rp = r.clone();
            rp[i] += h;
            SectionPrior::denoise_section(c, &rp, &s, &mut ap, &mut tmp);
            rp[i] -= 2.0 * h;
            SectionPrior::denoise_section(c, &rp, &s, &mut am, &mut tmp);
            let d = (ap[i] - am[i]) / (2.0 * h);
            prop_assert!((s2 * d - v[i]).abs() <= 1e-4 * v[i] + 1e-12, "{} vs {}", s2 * d, v[i]);
        }
    }

    #[test]
    fn section_posterior_is_a_distribution(b in 2usize..17, c in 0.3f64..2.0, s2 in 0.01f64..2.0, shift in -50.0f64..50.0) {
        let r: Vec<f64> = (0..b).map(|i| shift + i as f64 * 0.1).collect();
        let s = vec![s2; b];
        let (mut a, mut v) = (vec![0.0; b], vec![0.0; b]);
        SectionPrior::denoise_section(c, &r, &s, &mut a, &mut v);
        let total: f64 = a.iter().sum::<f64>() / c;
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|x| *x >= 0.0 && x.is_finite()));
    }
}
