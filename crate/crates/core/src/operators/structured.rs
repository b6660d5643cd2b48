use rand::seq::SliceRandom;
use rand::Rng;

use super::fwht::fwht_unchecked;
use super::OperatorError;

/// One randomized, sub-sampled Walsh-Hadamard block.
///
/// `forward(x) = scale * S H D P x` where `P` permutes the input
/// (`(Px)_j = x[perm[j]]`), `D` flips signs, `H` is the unnormalized
/// transform and `S` keeps the rows listed in `modes`, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredBlock {
    n: usize,
    modes: Vec<usize>,
    perm: Vec<usize>,
    signs: Vec<f64>,
    scale: f64,
}

impl StructuredBlock {
    pub fn new(
        n: usize,
        modes: Vec<usize>,
        perm: Vec<usize>,
        signs: Vec<f64>,
        scale: f64,
    ) -> Result<Self, OperatorError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(OperatorError::NotPowerOfTwo(n));
        }
        if modes.len() > n || perm.len() != n || signs.len() != n {
            return Err(OperatorError::InvalidParameter("structured block sizes".into()));
        }
        let mut seen = vec![false; n];
        for &m in &modes {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(OperatorError::InvalidParameter("modes must be distinct and < n".into()));
            }
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(OperatorError::InvalidParameter("column permutation is not a bijection".into()));
            }
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(OperatorError::InvalidParameter("signs must be +-1".into()));
        }
        Ok(Self { n, modes, perm, signs, scale })
    }

    /// Full transform, no randomization.
    pub fn unrandomized(n: usize) -> Result<Self, OperatorError> {
        Self::new(n, (0..n).collect(), (0..n).collect(), vec![1.0; n], 1.0)
    }

    /// `rows` distinct modes in random order, random column permutation and
    /// random signs. Mode 0 (the all-ones row) is only eligible when
    /// `include_mode_zero` is set.
    pub fn random<R: Rng>(
        n: usize,
        rows: usize,
        scale: f64,
        include_mode_zero: bool,
        rng: &mut R,
    ) -> Result<Self, OperatorError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(OperatorError::NotPowerOfTwo(n));
        }
        let first = if include_mode_zero { 0 } else { 1 };
        if rows > n - first {
            return Err(OperatorError::InvalidParameter(format!(
                "{rows} rows requested from a Hadamard block with {} usable modes",
                n - first
            )));
        }
        let mut candidates: Vec<usize> = (first..n).collect();
        let (chosen, _) = candidates.partial_shuffle(rng, rows);
        let modes = chosen.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let signs = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Self::new(n, modes, perm, signs, scale)
    }

    pub fn width(&self) -> usize {
        self.n
    }
    pub fn rows(&self) -> usize {
        self.modes.len()
    }
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `out += factor * F x`; returns the butterfly count.
    pub fn forward_add(&self, x: &[f64], out: &mut [f64], factor: f64) -> u64 {
        let mut u: Vec<f64> = self.perm.iter().zip(&self.signs).map(|(&p, s)| s * x[p]).collect();
        let ops = fwht_unchecked(&mut u);
        let k = factor * self.scale;
        for (o, &m) in out.iter_mut().zip(&self.modes) {
            *o += k * u[m];
        }
        ops
    }

    /// `out += factor * F^T r`; returns the butterfly count.
    pub fn backward_add(&self, r: &[f64], out: &mut [f64], factor: f64) -> u64 {
        let mut u = vec![0.0; self.n];
        for (&m, &v) in self.modes.iter().zip(r) {
            u[m] = v;
        }
        let ops = fwht_unchecked(&mut u);
        let k = factor * self.scale;
        for ((&p, s), v) in self.perm.iter().zip(&self.signs).zip(&u) {
            out[p] += k * s * v;
        }
        ops
    }

    /// Dense materialization, `rows x n`, including `scale`.
    pub fn materialize(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows() * self.n];
        for (k, &m) in self.modes.iter().enumerate() {
            for j in 0..self.n {
                let col = self.perm[j];
                out[k * self.n + col] = self.scale * self.signs[j] * super::fwht::hadamard_entry(m, j);
            }
        }
        out
    }
}
