//! Dense symmetric positive-definite algebra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A square matrix checked to be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    /// Wraps `m` after checking squareness and symmetry to 1e-12 relative.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                got: m.cols,
            });
        }
        let scale = m.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..m.rows {
            for j in 0..i {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > 1e-12 * scale {
                    return Err(Error::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    fn mean_diag(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.0[(i, i)]).sum::<f64>() / n as f64
    }
}

/// Escalating diagonal jitter applied when a plain Cholesky factorization fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterLadder {
    /// First jitter, relative to the mean diagonal.
    pub start: f64,
    /// Last jitter tried before giving up, relative to the mean diagonal.
    pub max: f64,
    pub factor: f64,
}

impl Default for JitterLadder {
    fn default() -> Self {
        Self {
            start: 1e-10,
            max: 1e-4,
            factor: 10.0,
        }
    }
}

impl JitterLadder {
    pub fn none() -> Self {
        Self {
            start: 0.0,
            max: 0.0,
            factor: 10.0,
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A + jitter·I = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factor with the jitter ladder; the absolute jitter actually added is recorded.
    pub fn factor(a: &SpdMatrix, ladder: &JitterLadder) -> Result<Self> {
        if let Some(c) = Self::try_factor(a, 0.0) {
            return Ok(c);
        }
        let mean = a.mean_diag();
        if !(mean > 0.0) || ladder.start <= 0.0 {
            return Err(Error::NotPositiveDefinite { jitter: 0.0 });
        }
        let mut rel = ladder.start;
        let mut last = 0.0;
        while rel <= ladder.max * (1.0 + 1e-9) {
            last = rel * mean;
            if let Some(c) = Self::try_factor(a, last) {
                return Ok(c);
            }
            rel *= ladder.factor;
        }
        Err(Error::NotPositiveDefinite { jitter: last })
    }

    /// Factor with a fixed, pre-chosen jitter (used to rebuild a stored model bit-exactly).
    pub fn factor_with_jitter(a: &SpdMatrix, jitter: f64) -> Result<Self> {
        Self::try_factor(a, jitter).ok_or(Error::NotPositiveDefinite { jitter })
    }

    fn try_factor(a: &SpdMatrix, jitter: f64) -> Option<Self> {
        let n = a.dim();
        let m = a.matrix();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m[(j, j)] + jitter;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Self { n, l, jitter })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves `L·y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ·x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// `L·u`, used to map unit-ball points onto an ellipsoid.
    pub fn lower_mul(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * u[k]).sum())
            .collect()
    }

    /// `bᵀ A⁻¹ b` via a single forward substitution.
    pub fn quad_inv(&self, b: &[f64]) -> f64 {
        self.forward(b).iter().map(|v| v * v).sum()
    }
}

/// Result of [`spd_solve`].
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Matrix,
    pub log_det: f64,
    /// Absolute diagonal jitter that was needed (0 when none).
    pub jitter: f64,
}

/// Solves `A·X = B` for symmetric positive-definite `A`, with the default jitter ladder.
pub fn spd_solve(a: &SpdMatrix, b: &Matrix) -> Result<SpdSolution> {
    spd_solve_with(a, b, &JitterLadder::default())
}

pub fn spd_solve_with(a: &SpdMatrix, b: &Matrix, ladder: &JitterLadder) -> Result<SpdSolution> {
    if b.rows() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.rows(),
        });
    }
    let chol = Cholesky::factor(a, ladder)?;
    let mut x = Matrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let sol = chol.solve(&b.col(j));
        for (i, v) in sol.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(SpdSolution {
        x,
        log_det: chol.log_det(),
        jitter: chol.jitter(),
    })
}
