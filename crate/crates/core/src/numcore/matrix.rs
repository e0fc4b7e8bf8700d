use std::fmt;

use serde::{Deserialize, Serialize};

use super::Rng;
use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Whether an operand enters a product as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", data.len()),
            ));
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
            m.data[i * n + i] = 1.0;
        }
        m
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

    /// Builds a matrix from equal-length rows. An empty slice gives a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn column_block(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for row in self.iter_rows() {
            data.extend_from_slice(&row[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// `out = alpha * op(a) * op(b) + beta * out`.
    ///
    /// Backed by `matrixmultiply::dgemm`; transposition is expressed through
    /// strides, so no copies are made.
    pub fn gemm(
        alpha: f64,
        a: &Matrix,
        ta: Transpose,
        b: &Matrix,
        tb: Transpose,
        beta: f64,
        out: &mut Matrix,
    ) -> Result<()> {
        let (m, k, rsa, csa) = match ta {
            Transpose::No => (a.rows, a.cols, a.cols as isize, 1),
            Transpose::Yes => (a.cols, a.rows, 1, a.cols as isize),
        };
        let (kb, n, rsb, csb) = match tb {
            Transpose::No => (b.rows, b.cols, b.cols as isize, 1),
            Transpose::Yes => (b.cols, b.rows, 1, b.cols as isize),
        };
        if k != kb {
            return Err(Error::shape("gemm", format!("inner dim {k}"), kb));
        }
        if out.shape() != (m, n) {
            return Err(Error::shape(
                "gemm",
                format!("{m}x{n} output"),
                format!("{}x{}", out.rows, out.cols),
            ));
        }
        if m == 0 || n == 0 {
            return Ok(());
        }
        if k == 0 {
            out.scale(beta);
            return Ok(());
        }
        // SAFETY: the dimension and stride arguments above describe exactly the
        // buffers owned by `a`, `b` and `out`, which do not alias (`out` is &mut).
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                out.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(())
    }

    /// Lower-triangular Cholesky factor `L` with `L * L^T = self`.
    pub fn cholesky(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::shape(
                "cholesky",
                "square matrix",
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag -= l.get(j, k) * l.get(j, k);
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l.set(j, j, ljj);
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(l)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.iter_rows().take(8) {
            writeln!(f, "  {row:?}")?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("b.rows == a.cols == {}", a.cols),
            b.rows,
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    Matrix::gemm(1.0, a, Transpose::No, b, Transpose::No, 0.0, &mut out)?;
    Ok(out)
}

/// Orthogonal initialization scaled by `gain`.
///
/// A `rows x cols` block of unit Gaussians is orthonormalized along its
/// shorter side with modified Gram-Schmidt (two passes, which keeps the
/// result orthogonal to machine precision), then scaled. The result has
/// `W W^T = gain^2 I` when `rows <= cols`, otherwise `W^T W = gain^2 I`.
pub fn orthogonal_init(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs a non-empty shape");
    let raw = Matrix::new(rows, cols, rng.gaussian_vec(rows * cols)).expect("sized above");
    // Work on vectors stored as rows: the rows of W, or the rows of W^T.
    let wide = rows <= cols;
    let mut vecs = if wide { raw } else { raw.transpose() };
    let (count, len) = vecs.shape();
    for i in 0..count {
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = vecs.data.split_at_mut(i * len);
                let vj = &head[j * len..(j + 1) * len];
                let vi = &mut tail[..len];
                let dot: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                vi.iter_mut().zip(vj).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let vi = vecs.row_mut(i);
        let norm = vi.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "degenerate Gaussian draw in orthogonal_init");
        vi.iter_mut().for_each(|v| *v /= norm);
    }
    vecs.scale(gain);
    if wide {
        vecs
    } else {
        vecs.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook triple loop, kept independent of the GEMM backend.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::new(rows, cols, rng.gaussian_vec(rows * cols)).unwrap()
    }

    #[test]
    fn identity_product() {
        let mut rng = Rng::new(3);
        let m = random(3, 4, &mut rng);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[2.0], [4.0]]).unwrap());
    }

    #[test]
    fn zero_product() {
        let mut rng = Rng::new(4);
        let m = random(3, 5, &mut rng);
        let c = matmul(&m, &Matrix::zeros(5, 2)).unwrap();
        assert_eq!(c, Matrix::zeros(3, 2));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let mut rng = Rng::new(11);
        let a = random(7, 5, &mut rng);
        let b = random(5, 6, &mut rng);
        let expected = naive_matmul(&a, &b);

        let at = a.transpose();
        let bt = b.transpose();
        for (lhs, ta, rhs, tb) in [
            (&a, Transpose::No, &b, Transpose::No),
            (&at, Transpose::Yes, &b, Transpose::No),
            (&a, Transpose::No, &bt, Transpose::Yes),
            (&at, Transpose::Yes, &bt, Transpose::Yes),
        ] {
            let mut out = Matrix::zeros(7, 6);
            Matrix::gemm(1.0, lhs, ta, rhs, tb, 0.0, &mut out).unwrap();
            assert!(out.max_abs_diff(&expected) < 1e-12);
        }

        // accumulate form
        let mut out = expected.clone();
        Matrix::gemm(2.0, &a, Transpose::No, &b, Transpose::No, 1.0, &mut out).unwrap();
        let mut triple = expected.clone();
        triple.scale(3.0);
        assert!(out.max_abs_diff(&triple) < 1e-12);
    }

    #[test]
    fn associativity_on_random_5x5() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let a = random(5, 5, &mut rng);
            let b = random(5, 5, &mut rng);
            let c = random(5, 5, &mut rng);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right) < 1e-10);
        }
    }

    fn gram(w: &Matrix) -> Matrix {
        if w.rows() <= w.cols() {
            naive_matmul(w, &w.transpose())
        } else {
            naive_matmul(&w.transpose(), w)
        }
    }

    fn assert_scaled_identity(g: &Matrix, s: f64, tol: f64) {
        let eye = {
            let mut e = Matrix::identity(g.rows());
            e.scale(s);
            e
        };
        assert!(g.max_abs_diff(&eye) < tol, "{g:?}");
    }

    #[test]
    fn orthogonal_square_unit_gain() {
        let w = orthogonal_init(4, 4, 1.0, &mut Rng::new(1));
        assert_scaled_identity(&naive_matmul(&w.transpose(), &w), 1.0, 1e-8);
    }

    #[test]
    fn orthogonal_square_relu_gain() {
        let w = orthogonal_init(4, 4, 2f64.sqrt(), &mut Rng::new(2));
        assert_scaled_identity(&naive_matmul(&w.transpose(), &w), 2.0, 1e-8);
    }

    #[test]
    fn orthogonal_wide_and_tall() {
        let w = orthogonal_init(2, 5, 1.0, &mut Rng::new(3));
        assert_scaled_identity(&naive_matmul(&w, &w.transpose()), 1.0, 1e-8);
        let w = orthogonal_init(16, 3, 1.5, &mut Rng::new(4));
        assert_eq!(w.shape(), (16, 3));
        assert_scaled_identity(&naive_matmul(&w.transpose(), &w), 2.25, 1e-8);
    }

    #[test]
    fn orthogonal_singular_value_proxy() {
        // All singular values equal gain iff trace(G) = gain^2 m and ||G||_F^2 = gain^4 m
        // for the m x m Gram matrix G.
        for (rows, cols, gain) in [(16, 256, 2f64.sqrt()), (256, 256, 2f64.sqrt()), (256, 3, 1.0)] {
            let w = orthogonal_init(rows, cols, gain, &mut Rng::new(rows as u64 * 7 + cols as u64));
            let g = gram(&w);
            let m = rows.min(cols) as f64;
            let trace: f64 = (0..g.rows()).map(|i| g.get(i, i)).sum();
            let frob2: f64 = g.data().iter().map(|v| v * v).sum();
            let g2 = gain * gain;
            assert!((trace - g2 * m).abs() < 1e-6 * m);
            assert!((frob2 - g2 * g2 * m).abs() < 1e-6 * m);
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = Matrix::from_rows(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]).unwrap();
        let l = a.cholesky().unwrap();
        assert!(naive_matmul(&l, &l.transpose()).max_abs_diff(&a) < 1e-12);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }
}
