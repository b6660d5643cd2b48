use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use super::coupled::{build_coupling_variances, CouplingEnsemble, CouplingVarianceMatrix};
use super::{BlockLayout, LinearOperator, OperatorError};
use crate::rng::{substream, tag};

/// Complex sensing operator. `backward` is the conjugate transpose and the
/// squared passes use `|F_{mu i}|^2`.
pub trait ComplexOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn forward_into(&self, x: &[Complex64], out: &mut [Complex64]);
    fn backward_into(&self, r: &[Complex64], out: &mut [Complex64]);
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]);
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]);

    /// Dense row-major copy, mainly for tests.
    fn to_dense(&self) -> ComplexDense {
        let (m, n) = (self.nrows(), self.ncols());
        let mut data = vec![Complex64::new(0.0, 0.0); m * n];
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            self.forward_into(&e, &mut col);
            for i in 0..m {
                data[i * n + j] = col[i];
            }
            e[j] = Complex64::new(0.0, 0.0);
        }
        ComplexDense { rows: m, cols: n, data }
    }
}

pub fn apply_forward_complex(op: &dyn ComplexOperator, x: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
    super::dense::check_len(op.ncols(), x.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); op.nrows()];
    op.forward_into(x, &mut out);
    Ok(out)
}

pub fn apply_backward_complex(op: &dyn ComplexOperator, r: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
    super::dense::check_len(op.nrows(), r.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); op.ncols()];
    op.backward_into(r, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexOperator for ComplexDense {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn forward_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
    fn backward_into(&self, r: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (rv, row) in r.iter().zip(self.data.chunks(self.cols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * rv;
            }
        }
    }
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols)) {
            *o = row.iter().zip(v).map(|(a, b)| a.norm_sqr() * b).sum();
        }
    }
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (uv, row) in u.iter().zip(self.data.chunks(self.cols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.norm_sqr() * uv;
            }
        }
    }
    fn to_dense(&self) -> ComplexDense {
        self.clone()
    }
}

/// Real operator acting separately on real and imaginary parts.
pub struct RealAsComplex<O> {
    pub inner: O,
}

impl<O: LinearOperator> ComplexOperator for RealAsComplex<O> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn forward_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let re: Vec<f64> = x.iter().map(|c| c.re).collect();
        let im: Vec<f64> = x.iter().map(|c| c.im).collect();
        let mut ore = vec![0.0; out.len()];
        let mut oim = vec![0.0; out.len()];
        self.inner.forward_into(&re, &mut ore);
        self.inner.forward_into(&im, &mut oim);
        for ((o, a), b) in out.iter_mut().zip(ore).zip(oim) {
            *o = Complex64::new(a, b);
        }
    }
    fn backward_into(&self, r: &[Complex64], out: &mut [Complex64]) {
        let re: Vec<f64> = r.iter().map(|c| c.re).collect();
        let im: Vec<f64> = r.iter().map(|c| c.im).collect();
        let mut ore = vec![0.0; out.len()];
        let mut oim = vec![0.0; out.len()];
        self.inner.backward_into(&re, &mut ore);
        self.inner.backward_into(&im, &mut oim);
        for ((o, a), b) in out.iter_mut().zip(ore).zip(oim) {
            *o = Complex64::new(a, b);
        }
    }
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        self.inner.forward_sq_into(v, out)
    }
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.backward_sq_into(u, out)
    }
}

/// Randomized sub-sampled DFT block, the complex analogue of
/// [`super::StructuredBlock`]: `forward(x) = scale * S W D P x` with `W` the
/// unnormalized DFT (`exp(-2 pi i jk/n)`).
#[derive(Clone)]
pub struct FourierBlock {
    n: usize,
    modes: Vec<usize>,
    perm: Vec<usize>,
    signs: Vec<f64>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierBlock")
            .field("n", &self.n)
            .field("rows", &self.modes.len())
            .field("scale", &self.scale)
            .finish()
    }
}

impl FourierBlock {
    pub fn random<R: Rng>(
        n: usize,
        rows: usize,
        scale: f64,
        include_mode_zero: bool,
        planner: &mut FftPlanner<f64>,
        rng: &mut R,
    ) -> Result<Self, OperatorError> {
        if n == 0 {
            return Err(OperatorError::ZeroDimension);
        }
        let first = if include_mode_zero { 0 } else { 1 };
        if rows > n - first {
            return Err(OperatorError::InvalidParameter(format!(
                "{rows} rows requested from a Fourier block with {} usable modes",
                n - first
            )));
        }
        let mut candidates: Vec<usize> = (first..n).collect();
        let (chosen, _) = candidates.partial_shuffle(rng, rows);
        let modes = chosen.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let signs = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Ok(Self {
            n,
            modes,
            perm,
            signs,
            scale,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        })
    }

    pub fn rows(&self) -> usize {
        self.modes.len()
    }

    fn forward_add(&self, x: &[Complex64], out: &mut [Complex64], factor: f64) {
        let mut u: Vec<Complex64> = self.perm.iter().zip(&self.signs).map(|(&p, s)| x[p] * *s).collect();
        self.fft.process(&mut u);
        let k = factor * self.scale;
        for (o, &m) in out.iter_mut().zip(&self.modes) {
            *o += u[m] * k;
        }
    }

    fn backward_add(&self, r: &[Complex64], out: &mut [Complex64], factor: f64) {
        let mut u = vec![Complex64::new(0.0, 0.0); self.n];
        for (&m, &v) in self.modes.iter().zip(r) {
            u[m] = v;
        }
        self.ifft.process(&mut u);
        let k = factor * self.scale;
        for ((&p, s), v) in self.perm.iter().zip(&self.signs).zip(&u) {
            out[p] += v * (k * s);
        }
    }
}

/// Coupled (or homogeneous) operator made of randomized Fourier blocks.
#[derive(Debug, Clone)]
pub struct ComplexBlockOperator {
    jmat: CouplingVarianceMatrix,
    l_r: usize,
    l_c: usize,
    row_off: Vec<usize>,
    col_off: Vec<usize>,
    blocks: Vec<Option<FourierBlock>>,
    norm: f64,
}

impl ComplexBlockOperator {
    pub fn build(
        ensemble: &CouplingEnsemble,
        n: usize,
        section: usize,
        include_mode_zero: bool,
        seed: u64,
    ) -> Result<Self, OperatorError> {
        let jmat = build_coupling_variances(ensemble)?;
        if n == 0 || section == 0 || n % section != 0 || n % ensemble.l_c != 0 {
            return Err(OperatorError::InvalidParameter(format!("inconsistent dimensions N={n}")));
        }
        let width = n / ensemble.l_c;
        let rows: Vec<usize> = ensemble
            .row_rates()
            .iter()
            .map(|a| ((a * width as f64).round() as usize).max(1))
            .collect();
        let mut row_off = vec![0];
        for m in &rows {
            row_off.push(row_off.last().unwrap() + m);
        }
        let col_off = (0..=ensemble.l_c).map(|c| c * width).collect();
        let mut planner = FftPlanner::new();
        let mut blocks = Vec::new();
        for r in 0..ensemble.l_r {
            for c in 0..ensemble.l_c {
                let jrc = jmat.get(r, c);
                if jrc == 0.0 {
                    blocks.push(None);
                    continue;
                }
                let mut rng = substream(seed, &[tag::OPERATOR, r as u64, c as u64]);
                blocks.push(Some(FourierBlock::random(
                    width,
                    rows[r],
                    jrc.sqrt(),
                    include_mode_zero,
                    &mut planner,
                    &mut rng,
                )?));
            }
        }
        Ok(Self {
            jmat,
            l_r: ensemble.l_r,
            l_c: ensemble.l_c,
            row_off,
            col_off,
            blocks,
            norm: 1.0 / ((n / section) as f64).sqrt(),
        })
    }

    pub fn block_layout(&self) -> BlockLayout {
        let n2 = self.norm * self.norm;
        BlockLayout {
            row_offsets: self.row_off.clone(),
            col_offsets: self.col_off.clone(),
            variances: self.jmat.values.iter().map(|j| j * n2).collect(),
        }
    }
}

impl ComplexOperator for ComplexBlockOperator {
    fn nrows(&self) -> usize {
        *self.row_off.last().unwrap()
    }
    fn ncols(&self) -> usize {
        *self.col_off.last().unwrap()
    }
    fn forward_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for r in 0..self.l_r {
            for c in 0..self.l_c {
                if let Some(b) = &self.blocks[r * self.l_c + c] {
                    b.forward_add(
                        &x[self.col_off[c]..self.col_off[c + 1]],
                        &mut out[self.row_off[r]..self.row_off[r + 1]],
                        self.norm,
                    );
                }
            }
        }
    }
    fn backward_into(&self, rv: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for r in 0..self.l_r {
            for c in 0..self.l_c {
                if let Some(b) = &self.blocks[r * self.l_c + c] {
                    b.backward_add(
                        &rv[self.row_off[r]..self.row_off[r + 1]],
                        &mut out[self.col_off[c]..self.col_off[c + 1]],
                        self.norm,
                    );
                }
            }
        }
    }
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        self.block_layout().forward_sq(v, out)
    }
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        self.block_layout().backward_sq(u, out)
    }
}
