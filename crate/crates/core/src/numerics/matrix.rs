use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::eigen;

/// Complex scalar used throughout.
pub type C64 = Complex64;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Unimodular scalar `e^{2 pi i turns}`.
#[inline]
pub fn cis_turns(turns: f64) -> C64 {
    C64::from_polar(1.0, std::f64::consts::TAU * turns)
}

/// Dense row-major complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:>9.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::EntryCount {
                rows,
                cols,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        debug_assert!(rows > 0 && cols > 0 && data.len() == rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self::from_raw(rows, cols, vec![C64::new(0.0, 0.0); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, C64::new(1.0, 0.0))
    }

    pub fn scalar(n: usize, value: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = value;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m[(i, i)] = z;
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
        Self::from_raw(rows, cols, data)
    }

    /// Builds a matrix from nested real/imaginary rows, mostly for tests.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z * s).collect())
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z * s).collect())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_re(0.5)
    }

    /// Kronecker product with index layout `(i, k) -> i * other.rows + k`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = other.shape();
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| {
            self[(r / r2, c / c2)] * other[(r % r2, c % c2)]
        })
    }

    pub fn direct_sum(blocks: &[&Self]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            out.set_block(r0, c0, b);
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for r in 0..b.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(&b.data[r * b.cols..(r + 1) * b.cols]);
        }
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let rows = cols[0].len();
        Self::from_fn(rows, cols.len(), |r, c| cols[c][r])
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Non-negative integer power by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Self {
        assert!(self.is_square());
        let mut base = self.clone();
        let mut acc = Self::identity(self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Integer power of a unitary; negative exponents use the adjoint.
    pub fn unitary_pow(&self, k: i64) -> Self {
        if k >= 0 {
            self.pow(k as u32)
        } else {
            self.adjoint().pow((-k) as u32)
        }
    }

    /// Operator norm `||M*M - I||`, the unitarity drift.
    pub fn isometry_drift(&self) -> f64 {
        let g = &self.adjoint() * self;
        (&g - &Self::identity(self.cols)).operator_norm()
    }

    pub fn unitarity_drift(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.isometry_drift()
            .max((&(self * &self.adjoint()) - &Self::identity(self.rows)).operator_norm())
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let gram = if self.cols <= self.rows {
            &self.adjoint() * self
        } else {
            self * &self.adjoint()
        };
        let top = eigen::hermitian_eigenvalues(&gram)
            .last()
            .copied()
            .unwrap_or(0.0);
        top.max(0.0).sqrt()
    }

    /// Nearest unitary in the polar decomposition `M = W |M|`.
    pub fn polar_unitary(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Shape("polar decomposition needs a square matrix".into()));
        }
        let gram = &self.adjoint() * self;
        let eig = eigen::hermitian_eigen(&gram);
        if eig.values[0] <= 1e-300 {
            return Err(Error::Shape("singular matrix has no unique polar factor".into()));
        }
        let inv_sqrt: Vec<f64> = eig.values.iter().map(|&l| 1.0 / l.sqrt()).collect();
        let root = eig.reconstruct(&inv_sqrt);
        Ok(self * &root)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let (n, p) = (self.rows, rhs.cols);
        let mut out = vec![C64::new(0.0, 0.0); n * p];
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * p..(k + 1) * p];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix::from_raw(n, p, out)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in add");
        ComplexMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in sub");
        ComplexMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        )
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_re(-1.0)
    }
}

/// Orthonormal basis of the orthogonal complement of the range of an
/// isometry `iota`, as the columns of the returned matrix.
pub fn orthonormal_complement(iota: &ComplexMatrix) -> Option<ComplexMatrix> {
    let (big, small) = iota.shape();
    let want = big.checked_sub(small)?;
    if want == 0 {
        return None;
    }
    let mut basis: Vec<Vec<C64>> = (0..small).map(|c| iota.column(c)).collect();
    let mut found = Vec::with_capacity(want);
    for i in 0..big {
        if found.len() == want {
            break;
        }
        let mut e = vec![C64::new(0.0, 0.0); big];
        e[i] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let proj: C64 = b.iter().zip(&e).map(|(x, y)| x.conj() * y).sum();
                for (y, x) in e.iter_mut().zip(b) {
                    *y -= proj * x;
                }
            }
        }
        let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            e.iter_mut().for_each(|z| *z /= norm);
            basis.push(e.clone());
            found.push(e);
        }
    }
    (found.len() == want).then(|| ComplexMatrix::from_columns(&found))
}

/// Operator norm of a dense matrix.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    m.operator_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(z: &[C64]) -> ComplexMatrix {
        ComplexMatrix::from_diag(z)
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(matches!(
            ComplexMatrix::new(0, 0, vec![]),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 2, vec![c64(1.0, 0.0)]),
            Err(Error::EntryCount { .. })
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 2, vec![c64(1.0, 0.0), c64(f64::NAN, 0.0)]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn norm_examples() {
        assert!((operator_norm(&ComplexMatrix::identity(3)) - 1.0).abs() < 1e-12);
        assert!((operator_norm(&diag(&[c64(1.0, 0.0), c64(0.0, 2.0)])) - 2.0).abs() < 1e-12);
        let nil = ComplexMatrix::from_rows(&[
            vec![c64(0.0, 0.0), c64(2.0, 0.0)],
            vec![c64(0.0, 0.0), c64(0.0, 0.0)],
        ])
        .unwrap();
        assert!((operator_norm(&nil) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rectangular_norm() {
        let m = ComplexMatrix::from_rows(&[vec![c64(3.0, 0.0), c64(0.0, 4.0)]]).unwrap();
        assert!((m.operator_norm() - 5.0).abs() < 1e-12);
        assert!((m.adjoint().operator_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn kron_layout() {
        let a = diag(&[c64(1.0, 0.0), c64(2.0, 0.0)]);
        let b = ComplexMatrix::from_rows(&[
            vec![c64(0.0, 0.0), c64(1.0, 0.0)],
            vec![c64(1.0, 0.0), c64(0.0, 0.0)],
        ])
        .unwrap();
        let k = a.kron(&b);
        assert_eq!(k[(0, 1)], c64(1.0, 0.0));
        assert_eq!(k[(2, 3)], c64(2.0, 0.0));
        assert_eq!(k[(0, 3)], c64(0.0, 0.0));
    }

    #[test]
    fn unitary_powers() {
        let u = diag(&[cis_turns(0.1), cis_turns(0.3)]);
        let p = u.unitary_pow(-3);
        assert!(p.max_abs_diff(&diag(&[cis_turns(-0.3), cis_turns(-0.9)])) < 1e-14);
        assert!(u.pow(0).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn complement_completes_basis() {
        let iota = ComplexMatrix::from_columns(&[vec![
            c64(0.6, 0.0),
            c64(0.0, 0.8),
            c64(0.0, 0.0),
        ]]);
        let comp = orthonormal_complement(&iota).unwrap();
        assert_eq!(comp.shape(), (3, 2));
        let full = ComplexMatrix::from_columns(&[iota.column(0), comp.column(0), comp.column(1)]);
        assert!(full.unitarity_drift() < 1e-14);
        assert!(orthonormal_complement(&ComplexMatrix::identity(2)).is_none());
    }

    #[test]
    fn polar_recovers_unitary() {
        let u = diag(&[cis_turns(0.2), cis_turns(0.7)]);
        let drifted = u.scale_re(1.0 + 1e-7);
        let w = drifted.polar_unitary().unwrap();
        assert!(w.max_abs_diff(&u) < 1e-13);
    }
}
