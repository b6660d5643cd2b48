use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::structured::StructuredBlock;
use super::{BlockLayout, DenseOperator, LinearOperator, OperatorError};
use crate::rng::{substream, tag};

/// Spatially-coupled ensemble `(L_c, L_r, w, J, alpha, beta_seed)`.
///
/// `j` is the forward-coupling variance (the square of the coupling
/// strength usually quoted as `sqrt(J)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEnsemble {
    pub l_c: usize,
    pub l_r: usize,
    pub w: usize,
    pub j: f64,
    pub alpha: f64,
    pub beta_seed: f64,
}

impl CouplingEnsemble {
    pub fn homogeneous(alpha: f64) -> Self {
        Self { l_c: 1, l_r: 1, w: 0, j: 1.0, alpha, beta_seed: 1.0 }
    }

    /// Ensemble given by the coupling strength `sqrt(J)`.
    pub fn new(l_c: usize, l_r: usize, w: usize, sqrt_j: f64, alpha: f64, beta_seed: f64) -> Self {
        Self { l_c, l_r, w, j: sqrt_j * sqrt_j, alpha, beta_seed }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.l_c == 1 && self.l_r == 1
    }

    pub fn alpha_seed(&self) -> f64 {
        if self.is_homogeneous() {
            self.alpha
        } else {
            self.alpha * self.beta_seed
        }
    }

    pub fn alpha_rest(&self) -> f64 {
        if self.l_r == 1 {
            self.alpha
        } else {
            self.alpha * (self.l_c as f64 - self.beta_seed) / (self.l_r as f64 - 1.0)
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        let bad = |m: &str| Err(OperatorError::InvalidEnsemble(m.to_string()));
        if self.l_c == 0 || self.l_r < self.l_c {
            return bad("need L_r >= L_c >= 1");
        }
        if !(self.j > 0.0 && self.j <= 1.0) {
            return bad("J must lie in (0, 1]");
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be positive");
        }
        if self.is_homogeneous() {
            return Ok(());
        }
        if !(self.beta_seed >= 1.0) {
            return bad("beta_seed must be >= 1");
        }
        if self.l_r == 1 || self.alpha_rest() <= 0.0 {
            return bad("alpha_rest <= 0: beta_seed too large for L_c");
        }
        Ok(())
    }

    /// Effective measurement rate of every block row.
    pub fn row_rates(&self) -> Vec<f64> {
        (0..self.l_r)
            .map(|r| if r == 0 { self.alpha_seed() } else { self.alpha_rest() })
            .collect()
    }
}

/// `L_r x L_c` grid of un-rescaled block variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingVarianceMatrix {
    pub l_r: usize,
    pub l_c: usize,
    pub values: Vec<f64>,
}

impl CouplingVarianceMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.l_c + c]
    }

    pub fn homogeneous() -> Self {
        Self { l_r: 1, l_c: 1, values: vec![1.0] }
    }

    /// Multiplies block column `c` by `s[c]` (used by power allocation).
    pub fn scale_columns(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.l_r {
            for c in 0..self.l_c {
                out.values[r * self.l_c + c] *= s[c];
            }
        }
        out
    }
}

/// Band layout: row block `r` sees columns `r-w..=r` with variance 1 and
/// column `r+1` with variance `J`, clipped to the grid.
pub fn build_coupling_variances(ens: &CouplingEnsemble) -> Result<CouplingVarianceMatrix, OperatorError> {
    ens.validate()?;
    let mut values = vec![0.0; ens.l_r * ens.l_c];
    for r in 0..ens.l_r {
        for c in 0..ens.l_c {
            let v = if c <= r && r <= c + ens.w {
                1.0
            } else if c == r + 1 {
                ens.j
            } else {
                0.0
            };
            values[r * ens.l_c + c] = v;
        }
    }
    let m = CouplingVarianceMatrix { l_r: ens.l_r, l_c: ens.l_c, values };
    for c in 0..ens.l_c {
        if (0..ens.l_r).all(|r| m.get(r, c) == 0.0) {
            return Err(OperatorError::InvalidEnsemble(format!("column block {c} is never measured")));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Gaussian,
    Hadamard,
}

#[derive(Debug, Clone)]
enum Block {
    Zero,
    Dense(Vec<f64>),
    Structured(StructuredBlock),
}

/// Spatially-coupled operator built from dense Gaussian or randomized
/// Hadamard blocks. Block entries have variance `J_rc`; the global factor
/// `1/sqrt(L)` (with `L = N/B`) is applied at apply time.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    ensemble: CouplingEnsemble,
    jmat: CouplingVarianceMatrix,
    kind: BlockKind,
    row_off: Vec<usize>,
    col_off: Vec<usize>,
    blocks: Vec<Block>,
    norm: f64,
}

pub fn gen_spatially_coupled(
    ensemble: &CouplingEnsemble,
    n: usize,
    section: usize,
    kind: BlockKind,
    seed: u64,
) -> Result<BlockOperator, OperatorError> {
    BlockOperator::build(ensemble, n, section, kind, false, seed)
}

impl BlockOperator {
    pub fn build(
        ensemble: &CouplingEnsemble,
        n: usize,
        section: usize,
        kind: BlockKind,
        include_mode_zero: bool,
        seed: u64,
    ) -> Result<Self, OperatorError> {
        let jmat = build_coupling_variances(ensemble)?;
        if n == 0 || section == 0 || n % section != 0 {
            return Err(OperatorError::InvalidParameter(format!("N={n} not a multiple of B={section}")));
        }
        if n % ensemble.l_c != 0 {
            return Err(OperatorError::InvalidParameter(format!("N={n} not divisible by L_c={}", ensemble.l_c)));
        }
        let width = n / ensemble.l_c;
        if kind == BlockKind::Hadamard && !width.is_power_of_two() {
            return Err(OperatorError::NotPowerOfTwo(width));
        }
        let rows: Vec<usize> = ensemble
            .row_rates()
            .iter()
            .map(|a| ((a * width as f64).round() as usize).max(1))
            .collect();
        let mut row_off = vec![0];
        for m in &rows {
            row_off.push(row_off.last().unwrap() + m);
        }
        let col_off: Vec<usize> = (0..=ensemble.l_c).map(|c| c * width).collect();
        let mut blocks = Vec::with_capacity(ensemble.l_r * ensemble.l_c);
        for r in 0..ensemble.l_r {
            for c in 0..ensemble.l_c {
                let jrc = jmat.get(r, c);
                if jrc == 0.0 {
                    blocks.push(Block::Zero);
                    continue;
                }
                let mut rng = substream(seed, &[tag::OPERATOR, r as u64, c as u64]);
                let b = match kind {
                    BlockKind::Gaussian => {
                        let sd = jrc.sqrt();
                        Block::Dense(
                            (0..rows[r] * width)
                                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                                .collect(),
                        )
                    }
                    BlockKind::Hadamard => Block::Structured(StructuredBlock::random(
                        width,
                        rows[r],
                        jrc.sqrt(),
                        include_mode_zero,
                        &mut rng,
                    )?),
                };
                blocks.push(b);
            }
        }
        let l = (n / section) as f64;
        Ok(Self { ensemble: *ensemble, jmat, kind, row_off, col_off, blocks, norm: 1.0 / l.sqrt() })
    }

    pub fn ensemble(&self) -> &CouplingEnsemble {
        &self.ensemble
    }
    pub fn variances(&self) -> &CouplingVarianceMatrix {
        &self.jmat
    }
    pub fn kind(&self) -> BlockKind {
        self.kind
    }
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_off
    }
    pub fn col_offsets(&self) -> &[usize] {
        &self.col_off
    }
    /// Global amplitude factor applied at apply time.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn block(&self, r: usize, c: usize) -> &Block {
        &self.blocks[r * self.ensemble.l_c + c]
    }

    /// Forward pass that also returns the number of transform butterflies.
    pub fn forward_counted(&self, x: &[f64], out: &mut [f64]) -> u64 {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut ops = 0;
        for r in 0..self.ensemble.l_r {
            let (r0, r1) = (self.row_off[r], self.row_off[r + 1]);
            for c in 0..self.ensemble.l_c {
                let xc = &x[self.col_off[c]..self.col_off[c + 1]];
                let o = &mut out[r0..r1];
                match self.block(r, c) {
                    Block::Zero => {}
                    Block::Dense(d) => {
                        let w = xc.len();
                        for (k, ov) in o.iter_mut().enumerate() {
                            let row = &d[k * w..(k + 1) * w];
                            *ov += self.norm * row.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    Block::Structured(s) => ops += s.forward_add(xc, o, self.norm),
                }
            }
        }
        ops
    }
}

impl LinearOperator for BlockOperator {
    fn nrows(&self) -> usize {
        *self.row_off.last().unwrap()
    }
    fn ncols(&self) -> usize {
        *self.col_off.last().unwrap()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.forward_counted(x, out);
    }

    fn backward_into(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for rb in 0..self.ensemble.l_r {
            let rr = &r[self.row_off[rb]..self.row_off[rb + 1]];
            for c in 0..self.ensemble.l_c {
                let (c0, c1) = (self.col_off[c], self.col_off[c + 1]);
                let o = &mut out[c0..c1];
                match self.block(rb, c) {
                    Block::Zero => {}
                    Block::Dense(d) => {
                        let w = c1 - c0;
                        for (k, &rv) in rr.iter().enumerate() {
                            let f = self.norm * rv;
                            for (ov, a) in o.iter_mut().zip(&d[k * w..(k + 1) * w]) {
                                *ov += a * f;
                            }
                        }
                    }
                    Block::Structured(s) => {
                        s.backward_add(rr, o, self.norm);
                    }
                }
            }
        }
    }

    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n2 = self.norm * self.norm;
        for r in 0..self.ensemble.l_r {
            let (r0, r1) = (self.row_off[r], self.row_off[r + 1]);
            for c in 0..self.ensemble.l_c {
                let vc = &v[self.col_off[c]..self.col_off[c + 1]];
                let o = &mut out[r0..r1];
                match self.block(r, c) {
                    Block::Zero => {}
                    Block::Dense(d) => {
                        let w = vc.len();
                        for (k, ov) in o.iter_mut().enumerate() {
                            let row = &d[k * w..(k + 1) * w];
                            *ov += n2 * row.iter().zip(vc).map(|(a, b)| a * a * b).sum::<f64>();
                        }
                    }
                    Block::Structured(s) => {
                        let t = n2 * s.scale() * s.scale() * vc.iter().sum::<f64>();
                        o.iter_mut().for_each(|ov| *ov += t);
                    }
                }
            }
        }
    }

    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n2 = self.norm * self.norm;
        for rb in 0..self.ensemble.l_r {
            let ur = &u[self.row_off[rb]..self.row_off[rb + 1]];
            let usum: f64 = ur.iter().sum();
            for c in 0..self.ensemble.l_c {
                let (c0, c1) = (self.col_off[c], self.col_off[c + 1]);
                let o = &mut out[c0..c1];
                match self.block(rb, c) {
                    Block::Zero => {}
                    Block::Dense(d) => {
                        let w = c1 - c0;
                        for (k, &uv) in ur.iter().enumerate() {
                            let f = n2 * uv;
                            for (ov, a) in o.iter_mut().zip(&d[k * w..(k + 1) * w]) {
                                *ov += a * a * f;
                            }
                        }
                    }
                    Block::Structured(s) => {
                        let t = n2 * s.scale() * s.scale() * usum;
                        o.iter_mut().for_each(|ov| *ov += t);
                    }
                }
            }
        }
    }

    fn block_layout(&self) -> Option<BlockLayout> {
        let n2 = self.norm * self.norm;
        Some(BlockLayout {
            row_offsets: self.row_off.clone(),
            col_offsets: self.col_off.clone(),
            variances: self.jmat.values.iter().map(|j| j * n2).collect(),
        })
    }

    fn to_dense(&self) -> DenseOperator {
        let (m, n) = (self.nrows(), self.ncols());
        let mut data = vec![0.0; m * n];
        for r in 0..self.ensemble.l_r {
            for c in 0..self.ensemble.l_c {
                let (r0, r1) = (self.row_off[r], self.row_off[r + 1]);
                let (c0, c1) = (self.col_off[c], self.col_off[c + 1]);
                let w = c1 - c0;
                let local = match self.block(r, c) {
                    Block::Zero => continue,
                    Block::Dense(d) => d.clone(),
                    Block::Structured(s) => s.materialize(),
                };
                for k in 0..(r1 - r0) {
                    for j in 0..w {
                        data[(r0 + k) * n + c0 + j] = self.norm * local[k * w + j];
                    }
                }
            }
        }
        DenseOperator::from_row_major(m, n, data).expect("materialized operator is finite")
    }
}
