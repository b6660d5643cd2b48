use rand::Rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Serialize};
use serde_json::json;

use sparse_amp::amp::{metrics, run_amp_with, RunOptions, Truth};
use sparse_amp::codes::{exponential_power_allocation, robust, run_code_trial, CodeSpec, GrossErrorChannel, RobustEcSpec};
use sparse_amp::operators::{apply_forward, LinearOperator, OperatorDims, OperatorKind, OperatorSpec};
use sparse_amp::potential::{find_transitions, BiGaussianFamily, Easy, PotentialCurve, PotentialFamily, SectionFamily};
use sparse_amp::priors::{Denoiser, PriorSpec, ScalarPrior};
use sparse_amp::rng::{substream, tag};
use sparse_amp::state_evolution::sections::{se_run_sections, SectionTable};
use sparse_amp::state_evolution::{se_run_scalar, BiGaussianSe, MmseMap, SectionMap, SectionsB2};

use crate::config::*;
use crate::output::{run_err, CliError, OutFile};

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Amp,
    Se,
    Potential,
    PhaseDiagram,
    Codes,
    RobustEc,
}

pub fn dispatch(kind: Kind, text: &str, seed: Option<u64>) -> Result<Vec<OutFile>, CliError> {
    match kind {
        Kind::Amp => cmd_amp(parse(text, seed, |c: &mut AmpRunConfig, s| c.seed = s)?),
        Kind::Se => cmd_se(parse(text, seed, |c: &mut SeRunConfig, s| c.seed = s)?),
        Kind::Potential => cmd_potential(parse(text, seed, |c: &mut PotentialRunConfig, s| c.seed = s)?),
        Kind::PhaseDiagram => cmd_phase_diagram(parse(text, seed, |c: &mut PhaseDiagramConfig, s| c.seed = s)?),
        Kind::Codes => cmd_codes(parse(text, seed, |c: &mut CodesConfig, s| c.seed = s)?),
        Kind::RobustEc => cmd_robust_ec(parse(text, seed, |c: &mut RobustEcConfig, s| c.seed = s)?),
    }
}

fn parse<T: DeserializeOwned>(text: &str, seed: Option<u64>, set: impl Fn(&mut T, u64)) -> Result<T, CliError> {
    let mut cfg: T = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        set(&mut cfg, s);
    }
    Ok(cfg)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Serialize)]
struct TraceOut {
    t: usize,
    delta: f64,
    mse: Option<f64>,
    ser: Option<f64>,
}

fn cmd_amp(cfg: AmpRunConfig) -> Result<Vec<OutFile>, CliError> {
    let n = cfg.n;
    if n == 0 {
        return Err(bad("n must be positive"));
    }
    let (section, den, signal): (Option<usize>, Box<dyn Denoiser>, Vec<f64>) = match &cfg.prior {
        PriorSpec::Section { .. } => {
            let p = cfg.prior.to_section().map_err(|e| bad(e.to_string()))?;
            let b = p.section_size();
            if n % b != 0 {
                return Err(bad("n must be a multiple of the section size"));
            }
            let (x, _) = p.sample(n / b, cfg.seed);
            (Some(b), Box::new(p), x)
        }
        PriorSpec::Mixture { .. } => {
            let p = cfg.prior.to_mixture().map_err(|e| bad(e.to_string()))?;
            let x = p.sample(n, cfg.seed);
            (None, Box::new(p), x)
        }
    };
    let rows = match (cfg.operator.kind, cfg.operator.alpha, cfg.operator.ensemble) {
        (OperatorKind::Dense, Some(a), _) => Some(((a * n as f64).round() as usize).max(1)),
        (OperatorKind::Dense, None, _) => return Err(bad("dense operator needs alpha")),
        (_, Some(a), None) => Some(((a * n as f64).round() as usize).max(1)),
        (_, None, None) => return Err(bad("operator needs alpha or an ensemble")),
        (_, _, Some(_)) => None,
    };
    let spec = OperatorSpec {
        kind: cfg.operator.kind,
        dims: OperatorDims { rows, cols: n, section: section.unwrap_or(1) },
        ensemble: cfg.operator.ensemble,
        seed: cfg.seed,
    };
    let op = spec.build().map_err(run_err)?;
    let mut y = apply_forward(op.as_ref(), &signal).map_err(run_err)?;
    if cfg.delta > 0.0 {
        let mut rng = substream(cfg.seed, &[tag::NOISE]);
        let sd = cfg.delta.sqrt();
        for v in y.iter_mut() {
            *v += sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    let amp = sparse_amp::amp::AmpConfig { delta: cfg.delta, ..cfg.amp };
    let truth = Truth { signal: &signal, section };
    let opts = RunOptions { full_tap: cfg.full_tap, ..Default::default() };
    let res = run_amp_with(op.as_ref(), &y, den.as_ref(), &amp, Some(&truth), &opts, None).map_err(run_err)?;
    let trace: Vec<TraceOut> =
        res.trace.iter().map(|r| TraceOut { t: r.t, delta: r.delta, mse: r.mse, ser: r.ser }).collect();
    let summary = json!({
        "config": cfg,
        "seed": cfg.seed,
        "m": op.nrows(),
        "n": n,
        "converged": res.converged,
        "diverged": res.diverged,
        "iterations": res.iterations,
        "mse": metrics::mse(&res.a, &signal),
        "ser": section.map(|b| metrics::ser(&res.a, &signal, b)),
    });
    Ok(vec![OutFile::csv("trace.csv", &trace)?, OutFile::json("result.json", &summary)?])
}

#[derive(Serialize)]
struct SeRow {
    control: f64,
    start: &'static str,
    t: usize,
    e: f64,
    ser: Option<f64>,
    se: f64,
}

fn section_table(b: usize, snr: f64, lo: f64, hi: f64, samples: usize, points: usize, seed: u64) -> Result<Box<dyn SectionMap>, CliError> {
    if b < 2 {
        return Err(bad("section size must be >= 2"));
    }
    if !(lo > 0.0 && hi >= lo && snr > 0.0) {
        return Err(bad("need 0 < lo <= hi and snr > 0"));
    }
    Ok(if b == 2 {
        Box::new(SectionsB2)
    } else {
        Box::new(SectionTable::for_rates(b, snr, lo, hi, points.max(2), samples, seed))
    })
}

fn min_max(v: &[f64]) -> Result<(f64, f64), CliError> {
    if v.is_empty() {
        return Err(bad("empty control list"));
    }
    Ok(v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))))
}

fn cmd_se(cfg: SeRunConfig) -> Result<Vec<OutFile>, CliError> {
    let mut rows = Vec::new();
    let mut points = Vec::new();
    match &cfg.family {
        SeFamily::Bigaussian { rho, eps, delta, alphas, quadrature } => {
            let prior = sparse_amp::priors::BiGaussian::approx_sparse(*rho, *eps);
            let map = BiGaussianSe::with_quadrature(prior, *quadrature);
            let runs: Vec<_> = alphas
                .par_iter()
                .map(|&a| {
                    let top = se_run_scalar(&map, a, *delta, map.e0(), cfg.tol, cfg.t_max)?;
                    let bottom = se_run_scalar(&map, a, *delta, 0.0, cfg.tol, cfg.t_max)?;
                    Ok((a, top, bottom))
                })
                .collect::<Result<_, sparse_amp::state_evolution::SeError>>()
                .map_err(run_err)?;
            for (a, top, bottom) in runs {
                for (start, run) in [("prior", &top), ("zero", &bottom)] {
                    for (t, e) in run.trajectory.iter().enumerate() {
                        rows.push(SeRow { control: a, start, t, e: e[0], ser: None, se: 0.0 });
                    }
                }
                points.push(json!({"alpha": a, "from_prior": top.last()[0], "from_zero": bottom.last()[0],
                    "iterations": top.iterations, "converged": top.converged}));
            }
        }
        SeFamily::Sections { b, snr, rates, samples, table_points } => {
            let (lo, hi) = min_max(rates)?;
            let map = section_table(*b, *snr, lo, hi, *samples, *table_points, cfg.seed)?;
            let bf = *b as f64;
            let e0 = (bf - 1.0) / (bf * bf);
            for &r in rates {
                let alpha = sparse_amp::state_evolution::section_alpha(*b, r);
                let top = se_run_sections(map.as_ref(), r, *snr, e0, cfg.tol, cfg.t_max).map_err(run_err)?;
                let bottom = se_run_sections(map.as_ref(), r, *snr, 0.0, cfg.tol, cfg.t_max).map_err(run_err)?;
                for (start, run) in [("prior", &top), ("zero", &bottom)] {
                    for (t, e) in run.trajectory.iter().enumerate() {
                        let s2 = sparse_amp::state_evolution::se_sigma(e[0], alpha, *snr, *b).map_err(run_err)?;
                        let st = map.stats(s2);
                        rows.push(SeRow { control: r, start, t, e: e[0], ser: Some(st.ser.value), se: st.var.se });
                    }
                }
                points.push(json!({"rate": r, "from_prior": top.last()[0], "from_zero": bottom.last()[0],
                    "iterations": top.iterations, "converged": top.converged}));
            }
        }
    }
    let summary = json!({"config": cfg, "seed": cfg.seed, "fixed_points": points});
    Ok(vec![OutFile::csv("trajectory.csv", &rows)?, OutFile::json("summary.json", &summary)?])
}

#[derive(Serialize)]
struct CurveRow {
    control: f64,
    e: f64,
    phi: f64,
}

fn curves<F: PotentialFamily + ?Sized>(family: &F, controls: &[f64], points: usize) -> Vec<(f64, PotentialCurve)> {
    controls.par_iter().map(|&c| (c, PotentialCurve::evaluate(family, c, points))).collect()
}

fn cmd_potential(cfg: PotentialRunConfig) -> Result<Vec<OutFile>, CliError> {
    if cfg.points < 3 {
        return Err(bad("need at least 3 grid points"));
    }
    let out = match &cfg.family {
        PotentialFamilyConfig::Bigaussian { rho, eps, delta } => {
            curves(&BiGaussianFamily::new(*rho, *eps, *delta), &cfg.controls, cfg.points)
        }
        PotentialFamilyConfig::Sections { b, snr, samples, table_points } => {
            let (lo, hi) = min_max(&cfg.controls)?;
            let map = section_table(*b, *snr, lo, hi, *samples, *table_points, cfg.seed)?;
            curves(&SectionFamily { map: map.as_ref(), snr: *snr }, &cfg.controls, cfg.points)
        }
    };
    let mut rows = Vec::new();
    let mut maxima = Vec::new();
    for (c, curve) in &out {
        for (e, phi) in curve.e.iter().zip(&curve.phi) {
            rows.push(CurveRow { control: *c, e: *e, phi: *phi });
        }
        maxima.push(json!({"control": c, "maxima": curve.maxima, "classification": curve.classification}));
    }
    let summary = json!({"config": cfg, "seed": cfg.seed, "curves": maxima});
    Ok(vec![OutFile::csv("curve.csv", &rows)?, OutFile::json("maxima.json", &summary)?])
}

#[derive(Serialize)]
struct DiagramRow {
    param: f64,
    bp: Option<f64>,
    opt: Option<f64>,
    s: Option<f64>,
}

fn cmd_phase_diagram(cfg: PhaseDiagramConfig) -> Result<Vec<OutFile>, CliError> {
    if !(cfg.tol > 0.0) {
        return Err(bad("tol must be positive"));
    }
    let rows: Vec<DiagramRow> = match &cfg.family {
        DiagramFamily::Bigaussian { rhos, eps, delta, lo, hi } => rhos
            .par_iter()
            .map(|&rho| {
                let t = find_transitions(&BiGaussianFamily::new(rho, *eps, *delta), *lo, *hi, Easy::High, cfg.tol)?;
                Ok(DiagramRow { param: rho, bp: t.bp.map(|x| x.value), opt: t.opt.map(|x| x.value), s: t.s.map(|x| x.value) })
            })
            .collect::<Result<_, sparse_amp::potential::PotentialError>>()
            .map_err(run_err)?,
        DiagramFamily::Sections { bs, snr, lo, hi, samples, table_points } => {
            let mut out = Vec::new();
            for &b in bs {
                let map = section_table(b, *snr, *lo, *hi, *samples, *table_points, cfg.seed)?;
                let t = find_transitions(&SectionFamily { map: map.as_ref(), snr: *snr }, *lo, *hi, Easy::Low, cfg.tol)
                    .map_err(run_err)?;
                out.push(DiagramRow {
                    param: b as f64,
                    bp: t.bp.map(|x| x.value),
                    opt: t.opt.map(|x| x.value),
                    s: t.s.map(|x| x.value),
                });
            }
            out
        }
    };
    let summary = json!({"config": cfg, "seed": cfg.seed, "points": rows.len()});
    Ok(vec![OutFile::csv("diagram.csv", &rows)?, OutFile::json("summary.json", &summary)?])
}

#[derive(Serialize)]
struct CodeRow {
    variant: String,
    rate: f64,
    realised_rate: f64,
    seed: u64,
    ser: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    wallclock_ms: Option<f64>,
}

fn cmd_codes(cfg: CodesConfig) -> Result<Vec<OutFile>, CliError> {
    if cfg.variants.is_empty() || cfg.rates.is_empty() || cfg.trials == 0 {
        return Err(bad("need variants, rates and trials"));
    }
    let mut jobs = Vec::new();
    for v in &cfg.variants {
        for &r in &cfg.rates {
            let mut spec = CodeSpec::new(cfg.l, cfg.b, r, cfg.snr);
            if let Some(g) = v.power_groups {
                if g == 0 {
                    return Err(bad("power_groups must be positive"));
                }
                spec.powers = exponential_power_allocation(g, cfg.snr);
            }
            spec.validate().map_err(|e| bad(e.to_string()))?;
            for k in 0..cfg.trials {
                jobs.push((v, spec.clone(), cfg.seed + k as u64));
            }
        }
    }
    let rows: Vec<CodeRow> = jobs
        .par_iter()
        .map(|(v, spec, seed)| {
            let start = std::time::Instant::now();
            let t = run_code_trial(spec, &v.operator, &cfg.amp, *seed)?;
            Ok(CodeRow {
                variant: v.name.clone(),
                rate: spec.rate,
                realised_rate: t.rate,
                seed: *seed,
                ser: t.ser,
                iterations: t.iterations,
                converged: t.converged,
                wallclock_ms: cfg.record_time.then(|| start.elapsed().as_secs_f64() * 1e3),
            })
        })
        .collect::<Result<_, sparse_amp::codes::CodeError>>()
        .map_err(run_err)?;
    let mut agg = Vec::new();
    for v in &cfg.variants {
        for &r in &cfg.rates {
            let sel: Vec<&CodeRow> = rows.iter().filter(|x| x.variant == v.name && x.rate == r).collect();
            let n = sel.len() as f64;
            agg.push(json!({
                "variant": v.name,
                "rate": r,
                "mean_ser": sel.iter().map(|x| x.ser).sum::<f64>() / n,
                "block_error_rate": sel.iter().filter(|x| x.ser > 0.0).count() as f64 / n,
            }));
        }
    }
    let summary = json!({"config": cfg, "seed": cfg.seed, "aggregate": agg});
    Ok(vec![OutFile::csv("trials.csv", &rows)?, OutFile::json("summary.json", &summary)?])
}

#[derive(Serialize)]
struct RobustRow {
    gamma: f64,
    seed: u64,
    rho_ideal: f64,
    error: f64,
    iterations: usize,
}

fn cmd_robust_ec(cfg: RobustEcConfig) -> Result<Vec<OutFile>, CliError> {
    let channel = GrossErrorChannel { rho: cfg.rho, eps: cfg.eps };
    let mut jobs = Vec::new();
    for &g in &cfg.gammas {
        let spec = RobustEcSpec { n: cfg.n, gamma: g, channel };
        spec.validate().map_err(|e| bad(e.to_string()))?;
        for k in 0..cfg.trials {
            jobs.push((spec, cfg.seed + k as u64));
        }
    }
    let amp = robust::robust_amp_config();
    let rows: Vec<RobustRow> = jobs
        .par_iter()
        .map(|(spec, seed)| {
            let t = sparse_amp::codes::robust_ec_roundtrip(spec, &amp, *seed)?;
            Ok(RobustRow { gamma: spec.gamma, seed: *seed, rho_ideal: t.rho_ideal, error: t.error, iterations: t.iterations })
        })
        .collect::<Result<_, sparse_amp::codes::CodeError>>()
        .map_err(run_err)?;
    let (gamma_opt, gamma_bp) = sparse_amp::codes::gamma_thresholds(&channel).map_err(run_err)?;
    let means: Vec<_> = cfg
        .gammas
        .iter()
        .map(|&g| {
            let sel: Vec<f64> = rows.iter().filter(|r| r.gamma == g).map(|r| r.rho_ideal).collect();
            json!({"gamma": g, "mean_rho_ideal": sel.iter().sum::<f64>() / sel.len().max(1) as f64})
        })
        .collect();
    let summary = json!({
        "config": cfg,
        "seed": cfg.seed,
        "gamma_opt": gamma_opt,
        "gamma_bp": gamma_bp,
        "gamma_dt_reference": sparse_amp::codes::GAMMA_DT,
        "means": means,
    });
    Ok(vec![OutFile::csv("trials.csv", &rows)?, OutFile::json("summary.json", &summary)?])
}
