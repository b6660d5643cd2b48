use proptest::prelude::*;
use sparse_amp::amp::*;
use sparse_amp::learning::{default_noise_learn, run_amp_em, LearnSchedule};
use sparse_amp::operators::*;
use sparse_amp::priors::*;
use sparse_amp::state_evolution::{se_run_scalar, BiGaussianSe};

fn gaussian_noise(m: usize, var: f64, seed: u64) -> Vec<f64> {
    MixturePrior::new(vec![MixtureComponent::Gauss { m: 0.0, v: var, weight: 1.0 }]).unwrap().sample(m, seed)
}

fn fixed_steps(t: usize) -> AmpConfig {
    AmpConfig { tol: 1e-300, t_max: t, ..AmpConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn column_permutation_permutes_the_estimate(seed in 0u64..1000, shift in 1usize..50) {
        let (m, n) = (60, 100);
        let prior = MixturePrior::gauss_bernoulli(0.2);
        let op = gen_iid_gaussian(m, n, 1.0 / n as f64, seed).unwrap();
        let s = prior.sample(n, seed);
        let y = apply_forward(&op, &s).unwrap();
        // rotate the columns by `shift`
        let perm: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] = op.get(i, perm[j]);
            }
        }
        let op_p = DenseOperator::from_row_major(m, n, data).unwrap();
        let cfg = AmpConfig { delta: 1e-4, ..fixed_steps(15) };
        let a = run_amp(&op, &y, &prior, &cfg, None).unwrap().a;
        let a_p = run_amp(&op_p, &y, &prior, &cfg, None).unwrap().a;
        for j in 0..n {
            prop_assert!((a_p[j] - a[perm[j]]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_measurements_keep_the_prior_mean(seed in 0u64..1000, rho in 0.05f64..0.9) {
        let prior = BiGaussian::approx_sparse(rho, 1e-3);
        let op = gen_iid_gaussian(40, 80, 1.0 / 80.0, seed).unwrap();
        let y = vec![0.0; 40];
        let r = run_amp(&op, &y, &prior, &AmpConfig { delta: 0.1, ..fixed_steps(10) }, None).unwrap();
        prop_assert!(r.a.iter().all(|a| a.abs() < 1e-14));
    }
}

/// Damped and undamped runs that both converge share their fixed point.
/// Strong damping of `(w, Theta)` can stall in a slow wobble, so the
/// comparison uses a mild value.
#[test]
fn damping_keeps_the_fixed_point() {
    let n = 1000;
    let prior = MixturePrior::gauss_bernoulli(0.1);
    let op = gen_iid_gaussian(600, n, 1.0 / n as f64, 3).unwrap();
    let s = prior.sample(n, 3);
    let mut y = apply_forward(&op, &s).unwrap();
    for (v, z) in y.iter_mut().zip(gaussian_noise(600, 1e-4, 4)) {
        *v += z;
    }
    let plain = AmpConfig { delta: 1e-4, tol: 1e-22, t_max: 5000, ..AmpConfig::default() };
    let damped = AmpConfig { damping: 0.2, ..plain };
    let a = run_amp(&op, &y, &prior, &plain, None).unwrap();
    let b = run_amp(&op, &y, &prior, &damped, None).unwrap();
    assert!(a.converged && b.converged);
    assert!(b.iterations > a.iterations);
    assert!((mse(&a.a, &s) - mse(&b.a, &s)).abs() < 1e-6);
    let gap = a.a.iter().zip(&b.a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn structured_operator_and_its_matrix_give_the_same_trajectory() {
    let ens = CouplingEnsemble::new(4, 5, 1, 0.5, 0.6, 1.3);
    let n = 256;
    let op = gen_spatially_coupled(&ens, n, 1, BlockKind::Hadamard, 9).unwrap();
    let dense = op.to_dense();
    let prior = BiGaussian::approx_sparse(0.2, 1e-6);
    let s = prior.sample(n, 9);
    let y = apply_forward(&op, &s).unwrap();
    let cfg = fixed_steps(20);
    let a = run_amp(&op, &y, &prior, &cfg, None).unwrap().a;
    let b = run_amp(&dense, &y, &prior, &cfg, None).unwrap().a;
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-9, "{gap}");
}

/// The per-entry error is intensive: doubling the size at a fixed rate
/// moves the final error by much less than its own value.
#[test]
fn final_error_is_intensive() {
    let prior = BiGaussian::approx_sparse(0.1, 1e-3);
    let cfg = AmpConfig { delta: 1e-3, tol: 1e-14, t_max: 500, ..AmpConfig::default() };
    let mean_mse = |n: usize| {
        (0..4u64)
            .map(|seed| {
                let op = gen_iid_gaussian(n / 2, n, 1.0 / n as f64, seed).unwrap();
                let s = prior.sample(n, seed);
                let mut y = apply_forward(&op, &s).unwrap();
                for (v, z) in y.iter_mut().zip(gaussian_noise(n / 2, 1e-3, seed + 100)) {
                    *v += z;
                }
                let r = run_amp(&op, &y, &prior, &cfg, None).unwrap();
                mse(&r.a, &s)
            })
            .sum::<f64>()
            / 4.0
    };
    let (small, large) = (mean_mse(1000), mean_mse(2000));
    assert!((small / large - 1.0).abs() < 0.3, "{small} vs {large}");
    // both sit at the recursion's fixed point
    let se = BiGaussianSe::new(prior);
    let fp = se_run_scalar(&se, 0.5, 1e-3, 0.1, 1e-14, 10_000).unwrap().last()[0];
    assert!((large / fp - 1.0).abs() < 0.3, "{large} vs {fp}");
}

#[test]
fn em_recovers_the_noise_variance() {
    let n = 2000;
    let truth = 1e-2;
    let prior = MixturePrior::gauss_bernoulli(0.1);
    let mut est = Vec::new();
    for seed in 0..3u64 {
        let op = gen_iid_gaussian(1200, n, 1.0 / n as f64, seed).unwrap();
        let s = prior.sample(n, seed);
        let mut y = apply_forward(&op, &s).unwrap();
        for (v, z) in y.iter_mut().zip(gaussian_noise(1200, truth, seed + 50)) {
            *v += z;
        }
        let schedule = LearnSchedule { noise: Some(default_noise_learn()), start: 5, ..LearnSchedule::default() };
        let cfg = AmpConfig { delta: 1.0, tol: 1e-12, t_max: 1000, ..AmpConfig::default() };
        let r = run_amp_em(&op, &y, &prior, &cfg, &schedule, None).unwrap();
        est.push(r.delta);
    }
    for d in &est {
        assert!((d / truth - 1.0).abs() < 0.2, "{est:?}");
    }
}
