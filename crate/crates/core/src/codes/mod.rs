//! Sparse superposition codes over the AWGN channel, and robust error
//! correction of real-valued signals.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amp::metrics::argmax_sections;
use crate::amp::{run_amp, AmpConfig, AmpError, TraceRow, Truth};
use crate::operators::{
    gen_iid_gaussian, BlockKind, BlockOperator, ColumnScaled, CouplingEnsemble, LinearOperator, OperatorError,
};
use crate::potential::PotentialError;
use crate::priors::{PriorError, SectionPrior};
use crate::rng::{substream, tag};
use crate::state_evolution::section_alpha;

pub mod robust;

pub use robust::{gamma_thresholds, robust_amp_config, robust_ec_roundtrip, GrossErrorChannel, RobustEcSpec, RobustEcTrial, GAMMA_DT};

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("invalid code: {0}")]
    InvalidSpec(String),
    #[error("symbol {symbol} at section {section} is outside 1..={b}")]
    SymbolOutOfRange { section: usize, symbol: usize, b: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Amp(#[from] AmpError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Code parameters. `powers` holds one section value per group; groups
/// split the sections into equal consecutive runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    /// Number of sections `L`.
    pub l: usize,
    /// Section size `B`.
    pub b: usize,
    /// Rate in bits per channel use.
    pub rate: f64,
    pub snr: f64,
    #[serde(default = "unit_power")]
    pub powers: Vec<f64>,
}

fn unit_power() -> Vec<f64> {
    vec![1.0]
}

impl CodeSpec {
    pub fn new(l: usize, b: usize, rate: f64, snr: f64) -> Self {
        Self { l, b, rate, snr, powers: unit_power() }
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        if self.l == 0 || self.b < 2 {
            return Err(CodeError::InvalidSpec("need L >= 1 and B >= 2".into()));
        }
        if !(self.rate > 0.0) || !(self.snr > 0.0) {
            return Err(CodeError::InvalidSpec("rate and snr must be positive".into()));
        }
        let g = self.powers.len();
        if g == 0 || self.l % g != 0 {
            return Err(CodeError::InvalidSpec(format!("{g} power groups do not divide L = {}", self.l)));
        }
        let p = self.powers.iter().map(|c| c * c).sum::<f64>() / g as f64;
        if (p - 1.0).abs() > 1e-9 {
            return Err(CodeError::InvalidSpec(format!("mean section power {p} is not 1")));
        }
        Ok(())
    }

    /// Signal length `N = L B`.
    pub fn n(&self) -> usize {
        self.l * self.b
    }

    /// Measurement rate `log2(B) / (R B)`.
    pub fn alpha(&self) -> f64 {
        section_alpha(self.b, self.rate)
    }

    /// Codeword length for a homogeneous operator, `round(L log2(B) / R)`.
    pub fn m(&self) -> usize {
        ((self.l as f64 * (self.b as f64).log2() / self.rate).round() as usize).max(1)
    }

    /// Rate actually achieved by a codeword of length `m`.
    pub fn rate_for(&self, m: usize) -> f64 {
        self.l as f64 * (self.b as f64).log2() / m as f64
    }

    pub fn prior(&self) -> Result<SectionPrior, CodeError> {
        Ok(SectionPrior::with_powers(self.b, self.powers.clone())?)
    }
}

/// Sparse signal of a message given as 1-based symbols.
pub fn encode_message(symbols: &[usize], spec: &CodeSpec) -> Result<Vec<f64>, CodeError> {
    if symbols.len() != spec.l {
        return Err(CodeError::InvalidSpec(format!("{} symbols for L = {}", symbols.len(), spec.l)));
    }
    let mut pos = Vec::with_capacity(symbols.len());
    for (section, &symbol) in symbols.iter().enumerate() {
        if symbol == 0 || symbol > spec.b {
            return Err(CodeError::SymbolOutOfRange { section, symbol, b: spec.b });
        }
        pos.push(symbol - 1);
    }
    Ok(spec.prior()?.signal_from_positions(&pos))
}

/// Per-section argmax as 1-based symbols.
pub fn decode_hard(a: &[f64], b: usize) -> Vec<usize> {
    argmax_sections(a, b).into_iter().map(|p| p + 1).collect()
}

/// Uniformly random message of `l` symbols.
pub fn random_message(l: usize, b: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, &[tag::MESSAGE]);
    (0..l).map(|_| rng.random_range(1..=b)).collect()
}

/// Exponential allocation `c_g = 2^{-C g/G} / Z`, `g = 1..G`, with `C` the
/// capacity at `snr` and `Z` fixing the mean power to one.
pub fn exponential_power_allocation(g: usize, snr: f64) -> Vec<f64> {
    assert!(g >= 1, "need at least one group");
    let c = crate::potential::capacity(snr);
    let gf = g as f64;
    let z2 = 2f64.powf(-2.0 * c / gf) * (1.0 - 2f64.powf(-2.0 * c)) / (gf * (1.0 - 2f64.powf(-2.0 * c / gf)));
    let z = z2.sqrt();
    (1..=g).map(|k| 2f64.powf(-c * k as f64 / gf) / z).collect()
}

/// Moves a power allocation into the operator: every column of group `g`
/// is multiplied by `c_g`, so the scaled system carries unit sections.
pub fn powalloc_to_block_operator<O: LinearOperator>(
    op: O,
    powers: &[f64],
    b: usize,
) -> Result<ColumnScaled<O>, CodeError> {
    let n = op.ncols();
    if b == 0 || n % b != 0 {
        return Err(CodeError::InvalidSpec(format!("N = {n} is not a multiple of B = {b}")));
    }
    let l = n / b;
    let g = powers.len();
    if g == 0 || l % g != 0 {
        return Err(CodeError::InvalidSpec(format!("{g} groups do not divide L = {l}")));
    }
    let scales = (0..n).map(|j| powers[(j / b) * g / l]).collect();
    Ok(ColumnScaled::new(op, scales)?)
}

/// Channel output with the noise variance that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub y: Vec<f64>,
    pub noise_var: f64,
}

/// Adds `N(0, P/snr)` noise, with `P` the measured mean codeword power.
pub fn awgn(codeword: &[f64], snr: f64, seed: u64) -> Received {
    let p = codeword.iter().map(|x| x * x).sum::<f64>() / codeword.len().max(1) as f64;
    let noise_var = if snr.is_infinite() { 0.0 } else { p / snr };
    let sd = noise_var.sqrt();
    let mut rng = substream(seed, &[tag::CHANNEL]);
    let y = codeword.iter().map(|x| x + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Received { y, noise_var }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub symbols: Vec<usize>,
    /// Section error rate against the reference message, when given.
    pub ser: Option<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// AMP decoding with the section prior followed by per-section argmax.
pub fn decode<O: LinearOperator + ?Sized>(
    rx: &Received,
    op: &O,
    spec: &CodeSpec,
    cfg: &AmpConfig,
    reference: Option<&[usize]>,
) -> Result<Decoded, CodeError> {
    spec.validate()?;
    if op.ncols() != spec.n() || op.nrows() != rx.y.len() {
        return Err(CodeError::InvalidSpec("operator does not match the code and channel output".into()));
    }
    let prior = spec.prior()?;
    let cfg = AmpConfig { delta: rx.noise_var, ..*cfg };
    let signal = reference.map(|m| encode_message(m, spec)).transpose()?;
    let truth = signal.as_deref().map(|s| Truth { signal: s, section: Some(spec.b) });
    let res = run_amp(op, &rx.y, &prior, &cfg, truth.as_ref())?;
    let symbols = decode_hard(&res.a, spec.b);
    let ser = reference.map(|m| {
        symbols.iter().zip(m).filter(|(a, b)| a != b).count() as f64 / spec.l as f64
    });
    Ok(Decoded {
        symbols,
        ser,
        converged: res.converged,
        diverged: res.diverged,
        iterations: res.iterations,
        trace: res.trace,
    })
}

/// Coupling pattern of a coded operator; the measurement rate comes from
/// the code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingShape {
    pub l_c: usize,
    pub l_r: usize,
    pub w: usize,
    pub sqrt_j: f64,
    pub beta_seed: f64,
}

impl Default for CouplingShape {
    fn default() -> Self {
        Self { l_c: 16, l_r: 17, w: 2, sqrt_j: 0.4, beta_seed: 1.8 }
    }
}

impl CouplingShape {
    pub fn ensemble(&self, alpha: f64) -> CouplingEnsemble {
        CouplingEnsemble::new(self.l_c, self.l_r, self.w, self.sqrt_j, alpha, self.beta_seed)
    }
}

/// Operator family used to encode. Without coupling a Gaussian kind gives
/// one i.i.d matrix and a Hadamard kind a single structured block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeOperator {
    #[serde(default)]
    pub coupling: Option<CouplingShape>,
    pub block: BlockKind,
}

impl CodeOperator {
    pub fn build(&self, spec: &CodeSpec, seed: u64) -> Result<Box<dyn LinearOperator>, CodeError> {
        spec.validate()?;
        let n = spec.n();
        Ok(match (self.coupling, self.block) {
            (None, BlockKind::Gaussian) => Box::new(gen_iid_gaussian(spec.m(), n, 1.0 / spec.l as f64, seed)?),
            (None, BlockKind::Hadamard) => Box::new(BlockOperator::build(
                &CouplingEnsemble::homogeneous(spec.alpha()),
                n,
                spec.b,
                BlockKind::Hadamard,
                false,
                seed,
            )?),
            (Some(shape), kind) => {
                Box::new(BlockOperator::build(&shape.ensemble(spec.alpha()), n, spec.b, kind, false, seed)?)
            }
        })
    }
}

/// Outcome of one encode / channel / decode round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeTrial {
    pub seed: u64,
    /// Rate realised by the operator's codeword length.
    pub rate: f64,
    pub ser: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

/// Random message, operator and noise from `seed`, then decoding.
pub fn run_code_trial(spec: &CodeSpec, op: &CodeOperator, cfg: &AmpConfig, seed: u64) -> Result<CodeTrial, CodeError> {
    let f = op.build(spec, seed)?;
    let msg = random_message(spec.l, spec.b, seed);
    let x = encode_message(&msg, spec)?;
    let mut cw = vec![0.0; f.nrows()];
    f.forward_into(&x, &mut cw);
    let rx = awgn(&cw, spec.snr, seed);
    let d = decode(&rx, f.as_ref(), spec, cfg, Some(&msg))?;
    Ok(CodeTrial {
        seed,
        rate: spec.rate_for(f.nrows()),
        ser: d.ser.unwrap_or(f64::NAN),
        iterations: d.iterations,
        converged: d.converged,
        diverged: d.diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::apply_forward;

    #[test]
    fn worked_example_encoding() {
        let spec = CodeSpec::new(4, 3, 1.0, 10.0);
        let x = encode_message(&[1, 3, 2, 3], &spec).unwrap();
        assert_eq!(x, vec![1., 0., 0., 0., 0., 1., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(decode_hard(&x, 3), vec![1, 3, 2, 3]);
        assert!(matches!(encode_message(&[1, 4, 2, 3], &spec), Err(CodeError::SymbolOutOfRange { section: 1, .. })));
        assert!(encode_message(&[0, 1, 2, 3], &spec).is_err());
    }

    #[test]
    fn allocation_normalization_and_partial_sums() {
        assert_eq!(exponential_power_allocation(1, 15.0), vec![1.0]);
        let (g, snr) = (64, 15.0);
        let c = exponential_power_allocation(g, snr);
        let cap = crate::potential::capacity(snr);
        let total: f64 = c.iter().map(|x| x * x).sum::<f64>() / g as f64;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] < w[0]));
        let mut run = 0.0;
        for (k, ck) in c.iter().enumerate() {
            run += ck * ck / g as f64;
            let closed = (1.0 - 2f64.powf(-2.0 * cap * (k + 1) as f64 / g as f64)) / (1.0 - 2f64.powf(-2.0 * cap));
            assert!((run - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn large_group_condition_tends_to_capacity_form() {
        let (g, snr) = (512, 15.0);
        let c = exponential_power_allocation(g, snr);
        let cap = crate::potential::capacity(snr);
        let want = 1.0 / (2.0 * cap * std::f64::consts::LN_2);
        let mut left = 1.0;
        for ck in &c {
            let ratio = (1.0 / snr + left) / (ck * ck);
            assert!((ratio / want - 1.0).abs() < 0.02, "{ratio} vs {want}");
            left -= ck * ck / g as f64;
        }
    }

    #[test]
    fn allocation_moves_into_column_variances() {
        let op = gen_iid_gaussian(400, 8, 1.0, 3).unwrap();
        let scaled = powalloc_to_block_operator(op.clone(), &[1.5f64.sqrt(), 0.5f64.sqrt()], 2).unwrap();
        let d = scaled.to_dense();
        let var = |j: usize| (0..400).map(|i| d.get(i, j).powi(2)).sum::<f64>() / (0..400).map(|i| op.get(i, j).powi(2)).sum::<f64>();
        for j in 0..4 {
            assert!((var(j) - 1.5).abs() < 1e-12);
            assert!((var(j + 4) - 0.5).abs() < 1e-12);
        }
        let same = powalloc_to_block_operator(op.clone(), &[1.0], 2).unwrap();
        let x: Vec<f64> = (0..8).map(|k| k as f64 - 3.0).collect();
        assert_eq!(apply_forward(&same, &x).unwrap(), apply_forward(&op, &x).unwrap());
        assert!(powalloc_to_block_operator(op, &[1.0; 3], 2).is_err());
    }

    #[test]
    fn channel_noise_level() {
        let x: Vec<f64> = (0..10_000).map(|k| if k % 2 == 0 { 2.0 } else { 0.0 }).collect();
        let rx = awgn(&x, 4.0, 11);
        assert!((rx.noise_var - 0.5).abs() < 1e-12);
        let emp = rx.y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((emp / 0.5 - 1.0).abs() < 0.05);
        assert_eq!(awgn(&x, 4.0, 11), rx);
        assert_eq!(awgn(&x, f64::INFINITY, 1).y, x);
    }

    #[test]
    fn deep_easy_phase_decodes() {
        let spec = CodeSpec::new(1 << 10, 16, 0.5, 1e6);
        let op = CodeOperator { coupling: None, block: BlockKind::Hadamard };
        let t = run_code_trial(&spec, &op, &AmpConfig::default(), 5).unwrap();
        assert_eq!(t.ser, 0.0);
    }
}
