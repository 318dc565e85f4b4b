//! Small dense linear algebra: row-major matrices, LU with partial pivoting and
//! Householder least squares. Sized for the systems this crate builds
//! (homographies, a few hundred RBF nodes, loss batches).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("system is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },
}

/// Row-major dense matrix. Serialized as `{rows, cols, data}`; deserializing
/// checks that `data` holds `rows·cols` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> TryFrom<RawMatrix<T>> for Matrix<T> {
    type Error = String;

    fn try_from(m: RawMatrix<T>) -> Result<Self, String> {
        if m.data.len() != m.rows * m.cols {
            return Err(format!("{}x{} matrix needs {} values, got {}", m.rows, m.cols, m.rows * m.cols, m.data.len()));
        }
        Ok(Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        })
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
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
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major data; `None` if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    /// Builds from a list of equally long rows; `None` on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
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
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
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

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn lu(&self) -> Result<Lu<T>, LinalgError> {
        Lu::factor(self.clone())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    original: Matrix<T>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: Matrix<T>) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::Dimension {
                expected: a.rows,
                got: a.cols,
            });
        }
        let n = a.rows;
        let original = a.clone();
        let mut lu = a;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = original.max_abs().max(T::min_positive_value());
        let tol = scale * T::epsilon() * T::lit(n.max(1) as f64);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tol || !pivot.is_finite() {
                return Err(LinalgError::Singular {
                    column: k,
                    pivot: pivot.as_f64(),
                });
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / d;
                lu[(r, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for c in k + 1..n {
                    lu[(r, c)] = lu[(r, c)] - f * lu[(k, c)];
                }
            }
        }
        Ok(Self { lu, perm, original })
    }

    fn substitute(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s = dot(&self.lu.row(r)[..r], &x[..r]);
            x[r] = x[r] - s;
        }
        for r in (0..n).rev() {
            let s = dot(&self.lu.row(r)[r + 1..], &x[r + 1..]);
            x[r] = (x[r] - s) / self.lu[(r, r)];
        }
        x
    }

    /// Solves `A x = b` with `refine` rounds of iterative refinement.
    pub fn solve(&self, b: &[T], refine: usize) -> Result<Vec<T>, LinalgError> {
        if b.len() != self.lu.rows {
            return Err(LinalgError::Dimension {
                expected: self.lu.rows,
                got: b.len(),
            });
        }
        let mut x = self.substitute(b);
        for _ in 0..refine {
            let ax = self.original.matvec(&x);
            let resid: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let dx = self.substitute(&resid);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi = *xi + d);
        }
        Ok(x)
    }

    pub fn determinant(&self) -> T {
        let n = self.lu.rows;
        let mut det = (0..n).fold(T::one(), |acc, i| acc * self.lu[(i, i)]);
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Least-squares solution of `A x ≈ b` by Householder QR. Returns an error when
/// the numerical rank (relative threshold `rank_tol`) is below `A.cols()`.
pub fn least_squares<T: Scalar>(a: &Matrix<T>, b: &[T], rank_tol: T) -> Result<Vec<T>, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(LinalgError::Dimension { expected: m, got: b.len() });
    }
    if m < n {
        return Err(LinalgError::RankDeficient { rank: m, cols: n });
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let col_scale = (0..n)
        .map(|c| (0..m).fold(T::zero(), |acc, i| acc + r[(i, c)] * r[(i, c)]).sqrt())
        .fold(T::zero(), T::max);
    for k in 0..n {
        let norm = (k..m).fold(T::zero(), |acc, i| acc + r[(i, k)] * r[(i, k)]).sqrt();
        if norm <= rank_tol * col_scale {
            return Err(LinalgError::RankDeficient { rank: k, cols: n });
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for c in k..n {
                let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * r[(i, c)]);
                let f = two * s / vnorm2;
                for i in k..m {
                    r[(i, c)] = r[(i, c)] - f * v[i - k];
                }
            }
            let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * rhs[i]);
            let f = two * s / vnorm2;
            for i in k..m {
                rhs[i] = rhs[i] - f * v[i - k];
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let s = (k + 1..n).fold(T::zero(), |acc, c| acc + r[(k, c)] * x[c]);
        x[k] = (rhs[k] - s) / r[(k, k)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let a = Matrix::<f64>::from_rows(&[vec![2.0, 1.0, 1.0], vec![4.0, -6.0, 0.0], vec![-2.0, 7.0, 2.0]]).unwrap();
        let b = [5.0, -2.0, 9.0];
        let x = a.lu().unwrap().solve(&b, 1).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
        assert!((x[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(a.lu(), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn determinant_tracks_row_swaps() {
        let a = Matrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((a.lu().unwrap().determinant() + 1.0).abs() < 1e-15);
        let b = Matrix::<f64>::from_rows(&[vec![3.0, 1.0], vec![2.0, 4.0]]).unwrap();
        assert!((b.lu().unwrap().determinant() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_fits_line() {
        // y = 2x + 1 with symmetric noise
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.1, 2.9, 5.1, 6.9];
        let a = Matrix::<f64>::from_fn(4, 2, |r, c| if c == 0 { xs[r] } else { 1.0 });
        let sol = least_squares(&a, &ys, 1e-12).unwrap();
        assert!((sol[0] - 1.96).abs() < 1e-9);
        assert!((sol[1] - 1.06).abs() < 1e-9);
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let a = Matrix::<f64>::from_fn(4, 2, |r, _| r as f64);
        assert!(matches!(
            least_squares(&a, &[0.0, 1.0, 2.0, 3.0], 1e-10),
            Err(LinalgError::RankDeficient { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::<f32>::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = a.lu().unwrap().solve(&[9.0, 8.0], 0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-5 && (x[1] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn json_checks_shape() {
        let m: Matrix<f64> = serde_json::from_str(r#"{"rows":2,"cols":1,"data":[1.0,2.0]}"#).unwrap();
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(serde_json::from_str::<Matrix<f64>>(&serde_json::to_string(&m).unwrap()).unwrap(), m);
        assert!(serde_json::from_str::<Matrix<f64>>(r#"{"rows":2,"cols":2,"data":[1.0]}"#).is_err());
    }
}
