use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// Dense row-major matrix of `f64`.
///
/// Sequences are stored one frame per row, so a `T x D` matrix holds `T`
/// frames of dimension `D`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(NnError::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice yields `0 x 0`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NnError::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        (0..self.rows).map(move |r| &self.data[r * cols..r * cols + self.cols])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies columns `start..start + width` into a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(NnError::Shape(format!(
                "column block {start}..{} exceeds {} columns",
                start + width,
                self.cols
            )));
        }
        Ok(Self::from_fn(self.rows, width, |r, c| self.get(r, start + c)))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(parts: &[&Matrix]) -> Result<Self> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(NnError::Shape(format!("cannot stack {} rows next to {rows}", bad.rows)));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = NnError;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::from_vec(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.iter_rows()).finish()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent partial sums let the compiler vectorise the loop.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0f64; 8];
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += W x` for a row-major `W` with `y.len()` rows.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (yi, wr) in y.iter_mut().zip(w.chunks_exact(n)) {
        *yi += dot(wr, x);
    }
}

/// `x_grad += W^T g` for a row-major `W` with `g.len()` rows.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], g: &[f64], x_grad: &mut [f64]) {
    let n = x_grad.len();
    for (gi, wr) in g.iter().zip(w.chunks_exact(n)) {
        if *gi == 0.0 {
            continue;
        }
        for (xg, wv) in x_grad.iter_mut().zip(wr) {
            *xg += gi * wv;
        }
    }
}

/// `W_grad += g x^T`.
#[inline]
pub(crate) fn outer_acc(g: &[f64], x: &[f64], w_grad: &mut [f64]) {
    let n = x.len();
    for (gi, wr) in g.iter().zip(w_grad.chunks_exact_mut(n)) {
        if *gi == 0.0 {
            continue;
        }
        for (wv, xv) in wr.iter_mut().zip(x) {
            *wv += gi * xv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn hstack_and_block_are_inverse() {
        let a = Matrix::from_fn(3, 2, |r, c| (r * 10 + c) as f64);
        let b = Matrix::from_fn(3, 4, |r, c| -((r * 10 + c) as f64));
        let s = Matrix::hstack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (3, 6));
        assert_eq!(s.column_block(0, 2).unwrap(), a);
        assert_eq!(s.column_block(2, 4).unwrap(), b);
        assert!(s.column_block(5, 2).is_err());
    }

    #[test]
    fn gemv_helpers_agree_with_loops() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let x = [1.0, -1.0, 2.0];
        let mut y = [0.5, 0.0];
        gemv_acc(&w, &x, &mut y);
        assert_eq!(y, [0.5 + 1.0 - 2.0 + 6.0, 4.0 - 5.0 + 12.0]);
        let mut xg = [0.0; 3];
        gemv_t_acc(&w, &[1.0, 2.0], &mut xg);
        assert_eq!(xg, [9.0, 12.0, 15.0]);
        let mut wg = [0.0; 6];
        outer_acc(&[1.0, 2.0], &x, &mut wg);
        assert_eq!(wg, [1.0, -1.0, 2.0, 2.0, -2.0, 4.0]);
    }
}
