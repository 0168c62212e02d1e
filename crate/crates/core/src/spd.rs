//! Dense symmetric matrices and the positive-definite kernels built on them.
//!
//! Matrices are stored in full row-major form with both triangles kept equal.
//! Positive definiteness is never tested separately: a matrix is in the cone
//! exactly when its Cholesky factorization succeeds.

use std::fmt;

use crate::error::{Error, Result};
use crate::tolerances::SYMMETRY_REL_TOL;

/// Dense symmetric `n x n` matrix.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix({}x{}) [", self.n, self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from `f(i, j)` evaluated on the lower triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Takes a row-major buffer and checks it is symmetric up to a small
    /// relative tolerance; the stored matrix is the symmetrized average.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        let scale = data.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let mut m = SymMatrix { n, data };
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (m.data[i * n + j], m.data[j * n + i]);
                if (a - b).abs() > SYMMETRY_REL_TOL * scale || a.is_nan() || b.is_nan() {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
                let avg = 0.5 * (a + b);
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, data)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Writes `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let k = idx.len();
        let mut out = SymMatrix::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            let row = self.row(i);
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * k + b] = row[j];
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same_order(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(SymMatrix { n: self.n, data })
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n, "order mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dense product `self * other` as a row-major buffer (not symmetric in general).
    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        assert_eq!(self.n, other.n, "order mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_same_order(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.order() != b.order() {
        return Err(Error::DimensionMismatch { expected: a.order(), found: b.order() });
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    // row-major, upper triangle left at zero
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.order();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Cholesky { n, l })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    /// Row-major `L⁻¹` (lower triangular).
    pub fn inverse_factor(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            inv[j * n + j] = 1.0 / self.l[j * n + j];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[i * n + k] * inv[k * n + j];
                }
                inv[i * n + j] = -s / self.l[i * n + i];
            }
        }
        inv
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        let li = self.inverse_factor();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                // (L⁻ᵀ L⁻¹)_ij = Σ_k≥max(i,j) Li[k,i] Li[k,j]
                let mut s = 0.0;
                for k in i..n {
                    s += li[k * n + i] * li[k * n + j];
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            let m = j.min(i);
            (0..=m).map(|k| self.l[i * n + k] * self.l[j * n + k]).sum()
        })
    }
}

pub fn cholesky(a: &SymMatrix) -> Result<Cholesky> {
    Cholesky::new(a)
}

pub fn log_det(a: &SymMatrix) -> Result<f64> {
    Ok(Cholesky::new(a)?.log_det())
}

pub fn inverse_spd(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(Cholesky::new(a)?.inverse())
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn trace_product(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same_order(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Validated, sorted node subset together with its complement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSplit {
    pub block: Vec<usize>,
    pub rest: Vec<usize>,
}

impl BlockSplit {
    pub fn new(order: usize, block: &[usize]) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::EmptyBlock);
        }
        let mut member = vec![false; order];
        for &i in block {
            if i >= order {
                return Err(Error::InvalidIndex { index: i, order });
            }
            if member[i] {
                return Err(Error::InvalidParameter(format!("node {i} repeated in block")));
            }
            member[i] = true;
        }
        let block = (0..order).filter(|&i| member[i]).collect();
        let rest = (0..order).filter(|&i| !member[i]).collect();
        Ok(BlockSplit { block, rest })
    }
}

/// Returns `(S_B, C_B)` with `C_B = Σ_{B,R} Σ_R⁻¹ Σ_{R,B}` and `S_B = Σ_B − C_B`,
/// where `R` is the complement of `B`. For `B = V`, `C_B` is zero.
pub fn schur_parts(sigma: &SymMatrix, split: &BlockSplit) -> Result<(SymMatrix, SymMatrix)> {
    let b = &split.block;
    let r = &split.rest;
    let sigma_b = sigma.submatrix(b);
    let mut cond = SymMatrix::zeros(b.len());
    if !r.is_empty() {
        let chol_r = Cholesky::new(&sigma.submatrix(r))?;
        // Y = L_R⁻¹ Σ_{R,B}, one column per block node; C_B = Yᵀ Y
        let ys: Vec<Vec<f64>> = b
            .iter()
            .map(|&bi| {
                let mut col: Vec<f64> = r.iter().map(|&ri| sigma.get(ri, bi)).collect();
                chol_r.forward_in_place(&mut col);
                col
            })
            .collect();
        for a in 0..b.len() {
            for c in 0..=a {
                let s: f64 = ys[a].iter().zip(&ys[c]).map(|(x, y)| x * y).sum();
                cond.set(a, c, s);
            }
        }
    }
    let schur = SymMatrix::from_fn(b.len(), |i, j| sigma_b.get(i, j) - cond.get(i, j));
    Ok((schur, cond))
}

/// Schur complement `Σ_B − Σ_{B,R} Σ_R⁻¹ Σ_{R,B}`, rows ordered by ascending node index.
pub fn schur_complement(sigma: &SymMatrix, block: &[usize]) -> Result<SymMatrix> {
    let split = BlockSplit::new(sigma.order(), block)?;
    Ok(schur_parts(sigma, &split)?.0)
}
