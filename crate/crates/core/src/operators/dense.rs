use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LinearOperator, OperatorError};
use crate::rng::{substream, tag};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    entry_variance: f64,
}

impl DenseOperator {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, OperatorError> {
        if rows == 0 || cols == 0 {
            return Err(OperatorError::ZeroDimension);
        }
        if data.len() != rows * cols {
            return Err(OperatorError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(OperatorError::NonFinite);
        }
        let entry_variance = data.iter().map(|x| x * x).sum::<f64>() / data.len() as f64;
        Ok(Self { rows, cols, data, entry_variance })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, OperatorError> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data, entry_variance: 1.0 / n as f64 }
    }

    /// Nominal variance of the entries (the sampling variance for generated
    /// matrices, the mean square entry otherwise).
    pub fn entry_variance(&self) -> f64 {
        self.entry_variance
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Multiplies column `c` by `s[c]`.
    pub fn scale_columns(&mut self, s: &[f64]) {
        for row in self.data.chunks_mut(self.cols) {
            for (x, k) in row.iter_mut().zip(s) {
                *x *= k;
            }
        }
    }

    /// Removes the empirical column means and centres `y` accordingly.
    ///
    /// If `F x = y` then `(F - 1 m^T) x = y - mean(y)`, since averaging the
    /// rows of `F x = y` gives `m^T x = mean(y)`.
    pub fn mean_center(&self, y: &[f64]) -> Result<(DenseOperator, Vec<f64>), OperatorError> {
        check_len(self.rows, y.len())?;
        let mut means = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= self.rows as f64;
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols) {
            for (x, m) in row.iter_mut().zip(&means) {
                *x -= m;
            }
        }
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        let yc = y.iter().map(|v| v - ybar).collect();
        let entry_variance = self.entry_variance;
        Ok((DenseOperator { rows: self.rows, cols: self.cols, data, entry_variance }, yc))
    }

    /// Orthonormal basis `A` (M x (M-R)) of the kernel of this R x M matrix,
    /// so that `F A = 0` and `A^T A = I`.
    pub fn nullspace_encoder(&self) -> Result<DenseOperator, OperatorError> {
        let (r, m) = (self.rows, self.cols);
        if r >= m {
            return Err(OperatorError::NoKernel { rows: r, cols: m });
        }
        // QR of the square matrix [F^T | 0] yields a full orthogonal Q whose
        // trailing M - R columns are orthogonal to the row space of F.
        let mut aug = DMatrix::<f64>::zeros(m, m);
        for i in 0..r {
            for j in 0..m {
                aug[(j, i)] = self.get(i, j);
            }
        }
        let qr = aug.qr();
        let rmat = qr.r();
        let scale = (0..r).map(|k| rmat[(k, k)].abs()).fold(0.0, f64::max);
        let tol = scale * 1e-10 * m as f64;
        if (0..r).any(|k| rmat[(k, k)].abs() <= tol) || scale == 0.0 {
            return Err(OperatorError::RankDeficient);
        }
        let q = qr.q();
        let n = m - r;
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(q[(i, r + j)]);
            }
        }
        DenseOperator::from_row_major(m, n, data)
    }

    /// `A^T v`, used as pseudoinverse for orthonormal-column encoders.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.backward_into(v, &mut out);
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), OperatorError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in 0..self.rows {
            wr.write_record(self.row(r).iter().map(|x| format!("{x:.17e}")))
                .map_err(|e| OperatorError::Io(e.to_string()))?;
        }
        wr.flush().map_err(|e| OperatorError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self, OperatorError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec.map_err(|e| OperatorError::Io(e.to_string()))?;
            if *cols.get_or_insert(rec.len()) != rec.len() {
                return Err(OperatorError::Io("ragged csv".into()));
            }
            for f in rec.iter() {
                data.push(f.trim().parse::<f64>().map_err(|e| OperatorError::Io(e.to_string()))?);
            }
            rows += 1;
        }
        Self::from_row_major(rows, cols.unwrap_or(0), data)
    }
}

/// Matrix with i.i.d `N(0, variance)` entries, reproducible from `seed`.
pub fn gen_iid_gaussian(
    rows: usize,
    cols: usize,
    variance: f64,
    seed: u64,
) -> Result<DenseOperator, OperatorError> {
    if rows == 0 || cols == 0 {
        return Err(OperatorError::ZeroDimension);
    }
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(OperatorError::InvalidParameter(format!("variance {variance}")));
    }
    let mut rng = substream(seed, &[tag::OPERATOR, 0, 0]);
    let sd = variance.sqrt();
    let data = (0..rows * cols)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(DenseOperator { rows, cols, data, entry_variance: variance })
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), OperatorError> {
    if expected != got {
        Err(OperatorError::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols)) {
            *o = dot(row, x);
        }
    }

    fn backward_into(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&rv, row) in r.iter().zip(self.data.chunks(self.cols)) {
            for (o, f) in out.iter_mut().zip(row) {
                *o += f * rv;
            }
        }
    }

    fn forward_sq_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols)) {
            *o = row.iter().zip(v).map(|(f, x)| f * f * x).sum();
        }
    }

    fn backward_sq_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&uv, row) in u.iter().zip(self.data.chunks(self.cols)) {
            for (o, f) in out.iter_mut().zip(row) {
                *o += f * f * uv;
            }
        }
    }

    fn forward_pair(&self, x: &[f64], v: &[f64], out_x: &mut [f64], out_v: &mut [f64]) {
        for ((ox, ov), row) in out_x.iter_mut().zip(out_v.iter_mut()).zip(self.data.chunks(self.cols)) {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for ((f, a), b) in row.iter().zip(x).zip(v) {
                s1 += f * a;
                s2 += f * f * b;
            }
            *ox = s1;
            *ov = s2;
        }
    }

    fn backward_pair(&self, r: &[f64], u: &[f64], out_r: &mut [f64], out_u: &mut [f64]) {
        out_r.iter_mut().for_each(|o| *o = 0.0);
        out_u.iter_mut().for_each(|o| *o = 0.0);
        for ((&rv, &uv), row) in r.iter().zip(u).zip(self.data.chunks(self.cols)) {
            for ((orr, ou), f) in out_r.iter_mut().zip(out_u.iter_mut()).zip(row) {
                *orr += f * rv;
                *ou += f * f * uv;
            }
        }
    }

    fn block_layout(&self) -> Option<super::BlockLayout> {
        Some(super::BlockLayout::homogeneous(self.rows, self.cols, self.entry_variance))
    }

    fn to_dense(&self) -> DenseOperator {
        self.clone()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
