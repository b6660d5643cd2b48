//! Sensing and coding operators.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod complex;
pub mod coupled;
pub mod dense;
pub mod fwht;
pub mod structured;

pub use complex::{
    apply_backward_complex, apply_forward_complex, ComplexBlockOperator, ComplexDense, ComplexOperator,
    RealAsComplex,
};
pub use coupled::{
    build_coupling_variances, gen_spatially_coupled, BlockKind, BlockOperator, CouplingEnsemble,
    CouplingVarianceMatrix,
};
pub use dense::{gen_iid_gaussian, DenseOperator};
pub use fwht::{fwht, fwht_counted};
pub use structured::StructuredBlock;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("operator dimensions must be positive")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid coupling ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("a {rows}x{cols} matrix has no nullspace to encode into")]
    NoKernel { rows: usize, cols: usize },
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("io: {0}")]
    Io(String),
}

/// Real linear operator `F` with the squared-entry companion `F^2`.
///
/// The `*_into` methods assume correctly sized buffers; the free
/// `apply_*` functions check dimensions.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn forward_into(&self, x: &[f64], out: &mut [f64]);
    fn backward_into(&self, r: &[f64], out: &mut [f64]);
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]);
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]);

    /// `(F x, F^2 v)` in one call.
    fn forward_pair(&self, x: &[f64], v: &[f64], out_x: &mut [f64], out_v: &mut [f64]) {
        self.forward_into(x, out_x);
        self.forward_sq_into(v, out_v);
    }

    /// `(F^T r, (F^2)^T u)` in one call.
    fn backward_pair(&self, r: &[f64], u: &[f64], out_r: &mut [f64], out_u: &mut [f64]) {
        self.backward_into(r, out_r);
        self.backward_sq_into(u, out_u);
    }

    /// Block variance structure, when the operator has one.
    fn block_layout(&self) -> Option<BlockLayout> {
        None
    }

    fn to_dense(&self) -> DenseOperator {
        let (m, n) = (self.nrows(), self.ncols());
        let mut data = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.forward_into(&e, &mut col);
            for i in 0..m {
                data[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        DenseOperator::from_row_major(m, n, data).expect("operator produced non-finite entries")
    }
}

macro_rules! forward_impl {
    ($t:ty) => {
        impl<T: LinearOperator + ?Sized> LinearOperator for $t {
            fn nrows(&self) -> usize {
                (**self).nrows()
            }
            fn ncols(&self) -> usize {
                (**self).ncols()
            }
            fn forward_into(&self, x: &[f64], out: &mut [f64]) {
                (**self).forward_into(x, out)
            }
            fn backward_into(&self, r: &[f64], out: &mut [f64]) {
                (**self).backward_into(r, out)
            }
            fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
                (**self).forward_sq_into(v, out)
            }
            fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
                (**self).backward_sq_into(u, out)
            }
            fn forward_pair(&self, x: &[f64], v: &[f64], ox: &mut [f64], ov: &mut [f64]) {
                (**self).forward_pair(x, v, ox, ov)
            }
            fn backward_pair(&self, r: &[f64], u: &[f64], or: &mut [f64], ou: &mut [f64]) {
                (**self).backward_pair(r, u, or, ou)
            }
            fn block_layout(&self) -> Option<BlockLayout> {
                (**self).block_layout()
            }
            fn to_dense(&self) -> DenseOperator {
                (**self).to_dense()
            }
        }
    };
}
forward_impl!(Box<T>);
forward_impl!(Arc<T>);
forward_impl!(&T);

/// Row and column partition of an operator whose squared entries are
/// constant within each block. `variances` is row-major `L_r x L_c` and
/// already contains every global rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub row_offsets: Vec<usize>,
    pub col_offsets: Vec<usize>,
    pub variances: Vec<f64>,
}

impl BlockLayout {
    pub fn homogeneous(rows: usize, cols: usize, variance: f64) -> Self {
        Self { row_offsets: vec![0, rows], col_offsets: vec![0, cols], variances: vec![variance] }
    }

    pub fn n_row_blocks(&self) -> usize {
        self.row_offsets.len() - 1
    }
    pub fn n_col_blocks(&self) -> usize {
        self.col_offsets.len() - 1
    }
    pub fn variance(&self, r: usize, c: usize) -> f64 {
        self.variances[r * self.n_col_blocks() + c]
    }

    /// `F^2 v` computed from block sums only.
    pub fn forward_sq(&self, v: &[f64], out: &mut [f64]) {
        let sums: Vec<f64> = (0..self.n_col_blocks())
            .map(|c| v[self.col_offsets[c]..self.col_offsets[c + 1]].iter().sum())
            .collect();
        for r in 0..self.n_row_blocks() {
            let t: f64 = sums.iter().enumerate().map(|(c, s)| self.variance(r, c) * s).sum();
            out[self.row_offsets[r]..self.row_offsets[r + 1]].iter_mut().for_each(|o| *o = t);
        }
    }

    /// `(F^2)^T u` computed from block sums only.
    pub fn backward_sq(&self, u: &[f64], out: &mut [f64]) {
        let sums: Vec<f64> = (0..self.n_row_blocks())
            .map(|r| u[self.row_offsets[r]..self.row_offsets[r + 1]].iter().sum())
            .collect();
        for c in 0..self.n_col_blocks() {
            let t: f64 = sums.iter().enumerate().map(|(r, s)| self.variance(r, c) * s).sum();
            out[self.col_offsets[c]..self.col_offsets[c + 1]].iter_mut().for_each(|o| *o = t);
        }
    }
}

pub fn apply_forward<O: LinearOperator + ?Sized>(op: &O, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
    dense::check_len(op.ncols(), x.len())?;
    let mut out = vec![0.0; op.nrows()];
    op.forward_into(x, &mut out);
    Ok(out)
}

pub fn apply_backward<O: LinearOperator + ?Sized>(op: &O, r: &[f64]) -> Result<Vec<f64>, OperatorError> {
    dense::check_len(op.nrows(), r.len())?;
    let mut out = vec![0.0; op.ncols()];
    op.backward_into(r, &mut out);
    Ok(out)
}

pub fn apply_forward_sq<O: LinearOperator + ?Sized>(op: &O, v: &[f64]) -> Result<Vec<f64>, OperatorError> {
    dense::check_len(op.ncols(), v.len())?;
    let mut out = vec![0.0; op.nrows()];
    op.forward_sq_into(v, &mut out);
    Ok(out)
}

pub fn apply_backward_sq<O: LinearOperator + ?Sized>(op: &O, u: &[f64]) -> Result<Vec<f64>, OperatorError> {
    dense::check_len(op.nrows(), u.len())?;
    let mut out = vec![0.0; op.ncols()];
    op.backward_sq_into(u, &mut out);
    Ok(out)
}

/// `F diag(s)`: every column of the inner operator multiplied by `s_i`.
#[derive(Debug, Clone)]
pub struct ColumnScaled<O> {
    inner: O,
    scales: Vec<f64>,
}

impl<O: LinearOperator> ColumnScaled<O> {
    pub fn new(inner: O, scales: Vec<f64>) -> Result<Self, OperatorError> {
        dense::check_len(inner.ncols(), scales.len())?;
        if scales.iter().any(|s| !s.is_finite()) {
            return Err(OperatorError::NonFinite);
        }
        Ok(Self { inner, scales })
    }
    pub fn inner(&self) -> &O {
        &self.inner
    }
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
}

impl<O: LinearOperator> LinearOperator for ColumnScaled<O> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let xs: Vec<f64> = x.iter().zip(&self.scales).map(|(a, s)| a * s).collect();
        self.inner.forward_into(&xs, out)
    }
    fn backward_into(&self, r: &[f64], out: &mut [f64]) {
        self.inner.backward_into(r, out);
        out.iter_mut().zip(&self.scales).for_each(|(o, s)| *o *= s);
    }
    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        let vs: Vec<f64> = v.iter().zip(&self.scales).map(|(a, s)| a * s * s).collect();
        self.inner.forward_sq_into(&vs, out)
    }
    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.backward_sq_into(u, out);
        out.iter_mut().zip(&self.scales).for_each(|(o, s)| *o *= s * s);
    }
    fn block_layout(&self) -> Option<BlockLayout> {
        let mut layout = self.inner.block_layout()?;
        let lc = layout.n_col_blocks();
        for c in 0..lc {
            let cols = &self.scales[layout.col_offsets[c]..layout.col_offsets[c + 1]];
            let s = cols[0];
            if cols.iter().any(|&t| t != s) {
                return None;
            }
            for r in 0..layout.n_row_blocks() {
                layout.variances[r * lc + c] *= s * s;
            }
        }
        Some(layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Single i.i.d Gaussian matrix with entry variance `1/cols`.
    Dense,
    /// Coupled composite of dense Gaussian blocks.
    Gaussian,
    /// Coupled composite of randomized Hadamard blocks.
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDims {
    /// Required for `dense`; otherwise implied by the ensemble.
    #[serde(default)]
    pub rows: Option<usize>,
    pub cols: usize,
    /// Section size `B` used for the global `1/sqrt(N/B)` rescaling.
    #[serde(default = "one")]
    pub section: usize,
}

fn one() -> usize {
    1
}

/// Serializable operator recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub dims: OperatorDims,
    #[serde(default)]
    pub ensemble: Option<CouplingEnsemble>,
    pub seed: u64,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<Box<dyn LinearOperator>, OperatorError> {
        let n = self.dims.cols;
        let ensemble = || -> Result<CouplingEnsemble, OperatorError> {
            match (self.ensemble, self.dims.rows) {
                (Some(e), _) => Ok(e),
                (None, Some(m)) => Ok(CouplingEnsemble::homogeneous(m as f64 / n as f64)),
                (None, None) => Err(OperatorError::InvalidParameter("need rows or an ensemble".into())),
            }
        };
        Ok(match self.kind {
            OperatorKind::Dense => {
                let m = self
                    .dims
                    .rows
                    .ok_or_else(|| OperatorError::InvalidParameter("dense operator needs rows".into()))?;
                let l = (n / self.dims.section.max(1)).max(1);
                Box::new(gen_iid_gaussian(m, n, 1.0 / l as f64, self.seed)?)
            }
            OperatorKind::Gaussian => {
                Box::new(gen_spatially_coupled(&ensemble()?, n, self.dims.section, BlockKind::Gaussian, self.seed)?)
            }
            OperatorKind::Hadamard => {
                Box::new(gen_spatially_coupled(&ensemble()?, n, self.dims.section, BlockKind::Hadamard, self.seed)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip_and_build() {
        let text = r#"{"kind":"hadamard","dims":{"cols":256},
            "ensemble":{"l_c":4,"l_r":5,"w":2,"j":0.16,"alpha":0.5,"beta_seed":1.2},"seed":3}"#;
        let spec: OperatorSpec = serde_json::from_str(text).unwrap();
        let op = spec.build().unwrap();
        assert_eq!(op.ncols(), 256);
        let again: OperatorSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        let dense = OperatorSpec {
            kind: OperatorKind::Dense,
            dims: OperatorDims { rows: Some(10), cols: 20, section: 1 },
            ensemble: None,
            seed: 1,
        };
        assert_eq!(dense.build().unwrap().nrows(), 10);
    }

    #[test]
    fn column_scaling_matches_dense() {
        let d = gen_iid_gaussian(6, 8, 1.0, 4).unwrap();
        let s: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.1).collect();
        let op = ColumnScaled::new(d.clone(), s.clone()).unwrap();
        let mut expect = d.clone();
        expect.scale_columns(&s);
        let got = op.to_dense();
        for (a, b) in got.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let a = apply_forward_sq(&op, &v).unwrap();
        let b = apply_forward_sq(&expect, &v).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
