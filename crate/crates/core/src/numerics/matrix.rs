//! Row-major dense matrix and small vector helpers.
//!
//! Dimensions in this crate stay small (a few hundred at most), so everything
//! is plain `Vec<f64>` storage with straightforward loops. Zero-sized shapes
//! (`0×n`, `n×0`) are valid and show up for unconstrained sets and point sets.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense real matrix, `data[i * cols + j] = M[i, j]`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatRepr", into = "MatRepr")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatRepr> for Mat {
    type Error = NumericsError;

    fn try_from(r: MatRepr) -> Result<Self, Self::Error> {
        Mat::new(r.rows, r.cols, r.data)
    }
}

impl From<Mat> for MatRepr {
    fn from(m: Mat) -> Self {
        MatRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mat {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::InvalidArgument(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    ///
    /// # Panics
    /// Panics if the rows have different lengths.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "row {i} has {} entries, expected {cols}", r.len());
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Single-column matrix.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat, NumericsError> {
        if self.cols != rhs.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs`, panicking on a shape mismatch. For internal use where
    /// shapes are fixed by construction.
    pub fn mul(&self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix product shape")
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `self * v`, panicking on a shape mismatch.
    pub fn mulv(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v).expect("matrix-vector shape")
    }

    /// `selfᵀ * v` without forming the transpose.
    pub fn tmulv(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "transposed matrix-vector shape");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat, NumericsError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat, NumericsError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        rhs: &Mat,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Mat, NumericsError> {
        if self.shape() != rhs.shape() {
            return Err(NumericsError::DimensionMismatch {
                op,
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += s * rhs` in place.
    pub fn add_scaled(&mut self, s: f64, rhs: &Mat) {
        assert_eq!(self.shape(), rhs.shape(), "add_scaled shape");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    /// `self += s * u vᵀ` in place.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        assert_eq!((self.rows, self.cols), (u.len(), v.len()), "outer shape");
        for (i, &ui) in u.iter().enumerate() {
            let su = s * ui;
            for (j, &vj) in v.iter().enumerate() {
                self.data[i * self.cols + j] += su * vj;
            }
        }
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &Mat) -> Result<Mat, NumericsError> {
        if self.rows != rhs.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "hstack",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let cols = self.cols + rhs.cols;
        let mut out = Mat::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
            out.data[i * cols + self.cols..(i + 1) * cols].copy_from_slice(rhs.row(i));
        }
        Ok(out)
    }

    /// Vertical concatenation `[self; rhs]`.
    pub fn vstack(&self, rhs: &Mat) -> Result<Mat, NumericsError> {
        if self.cols != rhs.cols {
            return Err(NumericsError::DimensionMismatch {
                op: "vstack",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        Ok(Mat {
            rows: self.rows + rhs.rows,
            cols: self.cols,
            data,
        })
    }

    /// Block diagonal `diag(self, rhs)`.
    pub fn block_diag(&self, rhs: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows + rhs.rows, self.cols + rhs.cols);
        out.set_block(0, 0, self);
        out.set_block(self.rows, self.cols, rhs);
        out
    }

    /// Writes `block` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> Mat {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        let w = end - start;
        let mut out = Mat::zeros(self.rows, w);
        for i in 0..self.rows {
            out.data[i * w..(i + 1) * w].copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_range(&self, start: usize, end: usize) -> Mat {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        Mat {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest entrywise deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`.
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacking_and_blocks() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Mat::column(&[5.0, 6.0]);
        let h = a.hstack(&b).unwrap();
        assert_eq!(h.row(1), &[3.0, 4.0, 6.0]);
        let v = a.vstack(&Mat::from_rows(&[&[7.0, 8.0]])).unwrap();
        assert_eq!(v.shape(), (3, 2));
        let d = a.block_diag(&Mat::identity(1));
        assert_eq!(d[(2, 2)], 1.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert!(a.hstack(&Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn empty_shapes_compose() {
        let e = Mat::zeros(0, 3);
        let m = Mat::identity(3);
        assert_eq!(e.mul(&m).shape(), (0, 3));
        assert_eq!(e.transpose().shape(), (3, 0));
        assert_eq!(e.tmulv(&[]), vec![0.0; 3]);
        assert_eq!(Mat::zeros(2, 0).mulv(&[]), vec![0.0, 0.0]);
    }

    #[test]
    fn serde_rejects_bad_length() {
        let bad = r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#;
        assert!(serde_json::from_str::<Mat>(bad).is_err());
        let m = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Mat>(&s).unwrap(), m);
    }
}
