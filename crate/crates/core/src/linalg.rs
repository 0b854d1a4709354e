//! Small dense linear algebra: square matrices, Cholesky factorisation and
//! Gaussian marginalisation by Schur complement.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `x^T M x` for a square matrix.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.mul_vec(x).iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    /// Sub-matrix picking rows `ri` and columns `ci`.
    pub fn select(&self, ri: &[usize], ci: &[usize]) -> Self {
        Self::from_fn(ri.len(), ci.len(), |i, j| self[(ri[i], ci[j])])
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::new(self)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular factor `L` with `M = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        assert_eq!(m.rows, m.cols, "Cholesky needs a square matrix");
        let n = m.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d.as_f64() });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    /// `ln det M`.
    pub fn log_det(&self) -> T {
        (0..self.l.rows).map(|i| self.l[(i, i)].ln()).sum::<T>() * T::lit(2.0)
    }

    // Index loops mirror the textbook substitutions.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `M^{-1} B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(b.rows, b.cols);
        let mut col = vec![T::zero(); b.rows];
        for j in 0..b.cols {
            for i in 0..b.rows {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix<T> {
        self.solve_matrix(&Matrix::identity(self.l.rows))
    }
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn solve_general<T: Real>(m: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = m.rows;
    assert_eq!(m.cols, n);
    assert_eq!(b.len(), n);
    let mut a = m.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv, piv_val) =
            (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val == T::zero() {
            return Err(Error::NotPositiveDefinite { pivot: col, value: 0.0 });
        }
        if piv != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                a[(r, j)] = a[(r, j)] - f * a[(col, j)];
            }
            x[r] = x[r] - f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s = s - a[(i, j)] * x[j];
        }
        x[i] = s / a[(i, i)];
    }
    Ok(x)
}

/// Result of integrating `exp(-(w^T M w - 2 b^T w + s))` over a block of variables.
#[derive(Debug, Clone)]
pub struct Marginal<T> {
    /// Schur complement `M_kk - M_kt M_tt^{-1} M_tk`.
    pub quad: Matrix<T>,
    /// `b_k - M_kt M_tt^{-1} b_t`.
    pub linear: Vec<T>,
    /// `s - b_t^T M_tt^{-1} b_t`.
    pub constant: T,
    /// `ln( pi^{d/2} det(M_tt)^{-1/2} )` with `d` the number of integrated variables.
    pub log_volume: T,
}

/// Integrates the Gaussian `exp(-(w^T M w - 2 b^T w + s))` over the variables
/// listed in `traced`, leaving a Gaussian over `kept`.
pub fn marginalize<T: Real>(m: &Matrix<T>, b: &[T], s: T, kept: &[usize], traced: &[usize]) -> Result<Marginal<T>> {
    let mkk = m.select(kept, kept);
    let bk: Vec<T> = kept.iter().map(|&i| b[i]).collect();
    if traced.is_empty() {
        return Ok(Marginal { quad: mkk, linear: bk, constant: s, log_volume: T::zero() });
    }
    let mtt = m.select(traced, traced);
    let mkt = m.select(kept, traced);
    let bt: Vec<T> = traced.iter().map(|&i| b[i]).collect();
    let chol = mtt.cholesky()?;
    let tt_inv_tk = chol.solve_matrix(&mkt.transpose());
    let tt_inv_bt = chol.solve(&bt);
    let correction = mkt.matmul(&tt_inv_tk);
    let quad = Matrix::from_fn(kept.len(), kept.len(), |i, j| mkk[(i, j)] - correction[(i, j)]);
    let shift = mkt.mul_vec(&tt_inv_bt);
    let linear = bk.iter().zip(&shift).map(|(&a, &c)| a - c).collect();
    let constant = s - bt.iter().zip(&tt_inv_bt).fold(T::zero(), |acc, (&a, &c)| acc + a * c);
    let d = T::from_usize_lossy(traced.len());
    let log_volume = d * T::lit(0.5) * T::PI().ln() - T::lit(0.5) * chol.log_det();
    Ok(Marginal { quad, linear, constant, log_volume })
}
