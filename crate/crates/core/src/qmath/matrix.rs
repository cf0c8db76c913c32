use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LqtError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LqtError::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LqtError::NonFinite);
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(entries[i], 0.0) } else { ZERO })
    }

    pub fn column(v: &[C64]) -> Self {
        ComplexMatrix { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// |v⟩⟨v|
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    /// |i⟩⟨j| in dimension `dim`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        m.data[i * dim + j] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LqtError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.matmul_unchecked(other))
    }

    pub(crate) fn matmul_unchecked(&self, other: &Self) -> Self {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == ZERO {
                    continue;
                }
                let orow = &other.data[l * m..(l + 1) * m];
                for (o, b) in row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix { rows: n, cols: m, data: out }
    }

    /// Tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let mut acc = ZERO;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += self.get(i, j) * other.get(j, i);
            }
        }
        acc
    }

    /// Largest absolute entrywise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_violation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    /// Eigenvalues (ascending) of the Hermitian part.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let eig = self.hermitian_part().to_nalgebra().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    /// Eigen-decomposition of the Hermitian part as (value, unit vector) pairs, ascending.
    pub fn eigh(&self) -> Vec<(f64, Vec<C64>)> {
        let eig = self.hermitian_part().to_nalgebra().symmetric_eigen();
        let mut pairs: Vec<(f64, Vec<C64>)> = (0..eig.eigenvalues.len())
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }

    /// Number of eigenvalues of the Hermitian part above `cutoff`.
    pub fn rank_hermitian(&self, cutoff: f64) -> usize {
        self.eigenvalues_hermitian().iter().filter(|&&v| v > cutoff).count()
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self.get(r, c);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as nested rows of `[re, im]` pairs.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> =
            (0..self.rows).map(|r| (0..self.cols).map(|c| [self.get(r, c).re, self.get(r, c).im]).collect()).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(deserializer)?;
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        let data = rows.into_iter().flatten().map(|[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_vec(n, m, data).map_err(serde::de::Error::custom)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        self.matmul_unchecked(rhs)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(ar * br, ac * bc);
    let oc = ac * bc;
    for i in 0..ar {
        for j in 0..ac {
            let x = a.data[i * ac + j];
            if x == ZERO {
                continue;
            }
            for k in 0..br {
                let row = (i * br + k) * oc + j * bc;
                for l in 0..bc {
                    out.data[row + l] = x * b.data[k * bc + l];
                }
            }
        }
    }
    out
}

/// Kronecker product of a sequence; the empty product is the 1×1 identity.
pub fn kron_all<'a>(mats: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    mats.into_iter().fold(ComplexMatrix::identity(1), |acc, m| kron(&acc, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_projectors() {
        let out = kron(&ComplexMatrix::diag(&[1.0, 0.0]), &ComplexMatrix::diag(&[0.0, 1.0]));
        assert_eq!(out, ComplexMatrix::diag(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn kron_shapes() {
        let out = kron(&ComplexMatrix::zeros(2, 2), &ComplexMatrix::zeros(3, 3));
        assert_eq!((out.rows(), out.cols()), (6, 6));
        let rect = kron(&ComplexMatrix::zeros(2, 1), &ComplexMatrix::zeros(1, 3));
        assert_eq!((rect.rows(), rect.cols()), (2, 3));
    }

    #[test]
    fn from_vec_rejects_nan() {
        let bad = ComplexMatrix::from_vec(1, 1, vec![C64::new(f64::NAN, 0.0)]);
        assert_eq!(bad, Err(LqtError::NonFinite));
        assert!(ComplexMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
    }

    #[test]
    fn eigenvalues_of_diag() {
        let m = ComplexMatrix::diag(&[1.5, -0.5]);
        let ev = m.eigenvalues_hermitian();
        assert!((ev[0] + 0.5).abs() < 1e-12 && (ev[1] - 1.5).abs() < 1e-12);
    }
}
