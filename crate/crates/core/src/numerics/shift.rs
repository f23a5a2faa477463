//! Block weighted shifts on cyclic rings.
//!
//! A [`WeightedShiftOperator`] stands for `Σ_k A_k ⊗ E_{k+p,k}` acting on
//! `C^m ⊗ C^L`, with basis index `(i, k) -> i * L + k`. Missing weights are
//! zero blocks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::matrix::{ComplexMatrix, C64};

/// Largest dimension that may be materialized densely.
pub const DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedShiftOperator {
    ring: usize,
    offset: usize,
    dim: usize,
    weights: BTreeMap<usize, ComplexMatrix>,
}

fn check_block(a: &ComplexMatrix, dim: usize) -> Result<()> {
    if a.shape() != (dim, dim) {
        return Err(Error::Shape(format!(
            "weight is {}x{}, expected {dim}x{dim}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

impl WeightedShiftOperator {
    pub fn new(
        ring: usize,
        offset: i64,
        dim: usize,
        weights: BTreeMap<usize, ComplexMatrix>,
    ) -> Result<Self> {
        if ring == 0 || dim == 0 {
            return Err(Error::InvalidArgument("ring size and dimension must be positive".into()));
        }
        for (&k, a) in &weights {
            if k >= ring {
                return Err(Error::InvalidArgument(format!("weight index {k} outside ring {ring}")));
            }
            check_block(a, dim)?;
        }
        Ok(Self {
            ring,
            offset: offset.rem_euclid(ring as i64) as usize,
            dim,
            weights,
        })
    }

    /// Weights `k -> f(k)` for every ring index.
    pub fn from_fn(
        ring: usize,
        offset: i64,
        dim: usize,
        mut f: impl FnMut(usize) -> ComplexMatrix,
    ) -> Result<Self> {
        Self::new(ring, offset, dim, (0..ring).map(|k| (k, f(k))).collect())
    }

    /// `A ⊗ S^p` with the same weight everywhere.
    pub fn constant(ring: usize, offset: i64, a: &ComplexMatrix) -> Result<Self> {
        Self::from_fn(ring, offset, a.rows(), |_| a.clone())
    }

    pub fn identity(ring: usize, dim: usize) -> Self {
        Self::constant(ring, 0, &ComplexMatrix::identity(dim)).expect("valid identity")
    }

    pub fn ring_size(&self) -> usize {
        self.ring
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Dimension `m` of each weight block.
    pub fn block_dim(&self) -> usize {
        self.dim
    }

    /// Dimension `m * L` of the space the operator acts on.
    pub fn total_dim(&self) -> usize {
        self.dim * self.ring
    }

    pub fn weight(&self, k: usize) -> Option<&ComplexMatrix> {
        self.weights.get(&(k % self.ring))
    }

    pub fn weights(&self) -> &BTreeMap<usize, ComplexMatrix> {
        &self.weights
    }

    fn weight_or_zero(&self, k: usize) -> ComplexMatrix {
        self.weight(k)
            .cloned()
            .unwrap_or_else(|| ComplexMatrix::zeros(self.dim, self.dim))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.ring != other.ring || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "weighted shifts on (m={}, L={}) and (m={}, L={})",
                self.dim, self.ring, other.dim, other.ring
            )));
        }
        Ok(())
    }

    pub fn densify(&self) -> Result<ComplexMatrix> {
        let n = self.total_dim();
        if n > DENSE_CAP {
            return Err(Error::SizeCap { dim: n, cap: DENSE_CAP });
        }
        let l = self.ring;
        let mut out = ComplexMatrix::zeros(n, n);
        for (&k, a) in &self.weights {
            let row = (k + self.offset) % l;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    out[(i * l + row, j * l + k)] = a[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// `max_k ||A_k||`, the exact operator norm.
    pub fn norm(&self) -> f64 {
        self.weights
            .values()
            .map(ComplexMatrix::operator_norm)
            .fold(0.0, f64::max)
    }

    /// Norms of the individual blocks, keyed by source ring index.
    pub fn block_norms(&self) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .map(|(&k, a)| (k, a.operator_norm()))
            .collect()
    }

    /// Product with offsets adding: weight `j -> A_{j+r} B_j`.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        let mut weights = BTreeMap::new();
        for (&j, b) in &rhs.weights {
            if let Some(a) = self.weight(j + rhs.offset) {
                weights.insert(j, a * b);
            }
        }
        Ok(Self {
            ring: self.ring,
            offset: (self.offset + rhs.offset) % self.ring,
            dim: self.dim,
            weights,
        })
    }

    fn combine(&self, rhs: &Self, sign: f64) -> Result<Self> {
        self.check_compatible(rhs)?;
        if self.offset != rhs.offset {
            return Err(Error::OffsetMismatch {
                left: self.offset,
                right: rhs.offset,
            });
        }
        let keys: std::collections::BTreeSet<usize> =
            self.weights.keys().chain(rhs.weights.keys()).copied().collect();
        let weights = keys
            .into_iter()
            .map(|k| {
                let w = &self.weight_or_zero(k) + &rhs.weight_or_zero(k).scale_re(sign);
                (k, w)
            })
            .collect();
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.combine(rhs, 1.0)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.combine(rhs, -1.0)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            weights: self.weights.iter().map(|(&k, a)| (k, a.scale(s))).collect(),
            ..self.clone()
        }
    }

    /// Adjoint: offset `-p`, weight `j -> A_{j-p}*`.
    pub fn adjoint(&self) -> Self {
        let l = self.ring;
        Self {
            ring: l,
            offset: (l - self.offset) % l,
            dim: self.dim,
            weights: self
                .weights
                .iter()
                .map(|(&k, a)| ((k + self.offset) % l, a.adjoint()))
                .collect(),
        }
    }

    /// `ι* A ι` for `ι = id_m ⊗ ξ` with a real vector `ξ` on the ring.
    pub fn compress_with(&self, xi: &[f64]) -> Result<ComplexMatrix> {
        if xi.len() != self.ring {
            return Err(Error::Shape(format!(
                "window length {} does not match ring {}",
                xi.len(),
                self.ring
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (&k, a) in &self.weights {
            let c = xi[(k + self.offset) % self.ring] * xi[k];
            if c != 0.0 {
                out = &out + &a.scale_re(c);
            }
        }
        Ok(out)
    }
}

pub fn ws_norm(a: &WeightedShiftOperator) -> f64 {
    a.norm()
}

pub fn ws_mul(a: &WeightedShiftOperator, b: &WeightedShiftOperator) -> Result<WeightedShiftOperator> {
    a.mul(b)
}

pub fn ws_sub(a: &WeightedShiftOperator, b: &WeightedShiftOperator) -> Result<WeightedShiftOperator> {
    a.sub(b)
}

pub fn ws_adjoint(a: &WeightedShiftOperator) -> WeightedShiftOperator {
    a.adjoint()
}

/// `Σ_{k,r} A_{k,r} ⊗ E_{k+p1,k} ⊗ E_{r+p2,r}` with basis index
/// `((i * L1 + k) * L2 + r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedShiftOperator2D {
    rings: (usize, usize),
    offsets: (usize, usize),
    dim: usize,
    weights: BTreeMap<(usize, usize), ComplexMatrix>,
}

impl WeightedShiftOperator2D {
    pub fn new(
        rings: (usize, usize),
        offsets: (i64, i64),
        dim: usize,
        weights: BTreeMap<(usize, usize), ComplexMatrix>,
    ) -> Result<Self> {
        if rings.0 == 0 || rings.1 == 0 || dim == 0 {
            return Err(Error::InvalidArgument("ring sizes and dimension must be positive".into()));
        }
        for (&(k, r), a) in &weights {
            if k >= rings.0 || r >= rings.1 {
                return Err(Error::InvalidArgument(format!(
                    "weight index ({k}, {r}) outside rings {rings:?}"
                )));
            }
            check_block(a, dim)?;
        }
        Ok(Self {
            rings,
            offsets: (
                offsets.0.rem_euclid(rings.0 as i64) as usize,
                offsets.1.rem_euclid(rings.1 as i64) as usize,
            ),
            dim,
            weights,
        })
    }

    pub fn from_fn(
        rings: (usize, usize),
        offsets: (i64, i64),
        dim: usize,
        mut f: impl FnMut(usize, usize) -> ComplexMatrix,
    ) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for k in 0..rings.0 {
            for r in 0..rings.1 {
                weights.insert((k, r), f(k, r));
            }
        }
        Self::new(rings, offsets, dim, weights)
    }

    pub fn ring_sizes(&self) -> (usize, usize) {
        self.rings
    }

    pub fn offsets(&self) -> (usize, usize) {
        self.offsets
    }

    pub fn block_dim(&self) -> usize {
        self.dim
    }

    pub fn total_dim(&self) -> usize {
        self.dim * self.rings.0 * self.rings.1
    }

    pub fn weight(&self, k: usize, r: usize) -> Option<&ComplexMatrix> {
        self.weights.get(&(k % self.rings.0, r % self.rings.1))
    }

    pub fn weights(&self) -> &BTreeMap<(usize, usize), ComplexMatrix> {
        &self.weights
    }

    /// Basis position of `e_i ⊗ e_k ⊗ e_r`.
    pub fn index(&self, i: usize, k: usize, r: usize) -> usize {
        (i * self.rings.0 + k) * self.rings.1 + r
    }

    pub fn densify(&self) -> Result<ComplexMatrix> {
        let n = self.total_dim();
        if n > DENSE_CAP {
            return Err(Error::SizeCap { dim: n, cap: DENSE_CAP });
        }
        let (l1, l2) = self.rings;
        let mut out = ComplexMatrix::zeros(n, n);
        for (&(k, r), a) in &self.weights {
            let (k2, r2) = ((k + self.offsets.0) % l1, (r + self.offsets.1) % l2);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    out[(self.index(i, k2, r2), self.index(j, k, r))] = a[(i, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .values()
            .map(ComplexMatrix::operator_norm)
            .fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.rings != other.rings || self.dim != other.dim {
            return Err(Error::Shape("incompatible two-ring weighted shifts".into()));
        }
        Ok(())
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        let mut weights = BTreeMap::new();
        for (&(k, r), b) in &rhs.weights {
            if let Some(a) = self.weight(k + rhs.offsets.0, r + rhs.offsets.1) {
                weights.insert((k, r), a * b);
            }
        }
        Ok(Self {
            rings: self.rings,
            offsets: (
                (self.offsets.0 + rhs.offsets.0) % self.rings.0,
                (self.offsets.1 + rhs.offsets.1) % self.rings.1,
            ),
            dim: self.dim,
            weights,
        })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        if self.offsets != rhs.offsets {
            return Err(Error::Shape(format!(
                "offset mismatch {:?} vs {:?}; densify before subtracting",
                self.offsets, rhs.offsets
            )));
        }
        let zero = ComplexMatrix::zeros(self.dim, self.dim);
        let keys: std::collections::BTreeSet<(usize, usize)> =
            self.weights.keys().chain(rhs.weights.keys()).copied().collect();
        let weights = keys
            .into_iter()
            .map(|key| {
                let a = self.weights.get(&key).unwrap_or(&zero);
                let b = rhs.weights.get(&key).unwrap_or(&zero);
                (key, a - b)
            })
            .collect();
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            weights: self.weights.iter().map(|(&k, a)| (k, a.scale(s))).collect(),
            ..self.clone()
        }
    }

    pub fn adjoint(&self) -> Self {
        let (l1, l2) = self.rings;
        Self {
            rings: self.rings,
            offsets: ((l1 - self.offsets.0) % l1, (l2 - self.offsets.1) % l2),
            dim: self.dim,
            weights: self
                .weights
                .iter()
                .map(|(&(k, r), a)| {
                    (
                        ((k + self.offsets.0) % l1, (r + self.offsets.1) % l2),
                        a.adjoint(),
                    )
                })
                .collect(),
        }
    }

    /// `ι* A ι` for `ι = id_m ⊗ ξ1 ⊗ ξ2`.
    pub fn compress_with(&self, xi1: &[f64], xi2: &[f64]) -> Result<ComplexMatrix> {
        if xi1.len() != self.rings.0 || xi2.len() != self.rings.1 {
            return Err(Error::Shape("window lengths do not match rings".into()));
        }
        let (l1, l2) = self.rings;
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (&(k, r), a) in &self.weights {
            let c = xi1[(k + self.offsets.0) % l1] * xi1[k] * xi2[(r + self.offsets.1) % l2] * xi2[r];
            if c != 0.0 {
                out = &out + &a.scale_re(c);
            }
        }
        Ok(out)
    }

    /// `(id ⊗ id ⊗ ξ2)* A (id ⊗ id ⊗ ξ2)` as a one-ring operator on `C^m ⊗ C^{L1}`.
    pub fn compress_second(&self, xi2: &[f64]) -> Result<WeightedShiftOperator> {
        if xi2.len() != self.rings.1 {
            return Err(Error::Shape("window length does not match second ring".into()));
        }
        let l2 = self.rings.1;
        let mut weights: BTreeMap<usize, ComplexMatrix> = BTreeMap::new();
        for (&(k, r), a) in &self.weights {
            let c = xi2[(r + self.offsets.1) % l2] * xi2[r];
            if c != 0.0 {
                let term = a.scale_re(c);
                let slot = weights
                    .entry(k)
                    .or_insert_with(|| ComplexMatrix::zeros(self.dim, self.dim));
                *slot = &*slot + &term;
            }
        }
        WeightedShiftOperator::new(self.rings.0, self.offsets.0 as i64, self.dim, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::c64;
    use crate::numerics::random::ginibre;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_ws(rng: &mut ChaCha8Rng, ring: usize, dim: usize, offset: i64) -> WeightedShiftOperator {
        WeightedShiftOperator::from_fn(ring, offset, dim, |_| ginibre(dim, dim, rng)).unwrap()
    }

    #[test]
    fn unitary_shift_norm() {
        let a = WeightedShiftOperator::constant(5, 1, &ComplexMatrix::identity(2)).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_diagonal_max() {
        let mut w = BTreeMap::new();
        w.insert(0, ComplexMatrix::zeros(1, 1));
        w.insert(1, ComplexMatrix::from_diag(&[c64(3.0, 0.0)]));
        let a = WeightedShiftOperator::new(2, 0, 1, w).unwrap();
        assert!((ws_norm(&a) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_norm_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_ws(&mut rng, 8, 4, 3);
        let dense = a.densify().unwrap().operator_norm();
        assert!((a.norm() - dense).abs() <= 1e-10 * dense.max(1.0));
    }

    #[test]
    fn shift_times_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = ginibre(3, 3, &mut rng);
        let diag = random_ws(&mut rng, 6, 3, 0);
        let us = WeightedShiftOperator::constant(6, 1, &u).unwrap();
        let prod = ws_mul(&us, &diag).unwrap();
        assert_eq!(prod.offset(), 1);
        for k in 0..6 {
            let expect = &u * diag.weight(k).unwrap();
            assert!(prod.weight(k).unwrap().max_abs_diff(&expect) < 1e-15);
        }
    }

    #[test]
    fn unitary_weights_give_identity() {
        let u = ComplexMatrix::from_rows(&[
            vec![c64(0.0, 0.0), c64(0.0, 1.0)],
            vec![c64(1.0, 0.0), c64(0.0, 0.0)],
        ])
        .unwrap();
        let a = WeightedShiftOperator::constant(7, 3, &u).unwrap();
        let p = ws_mul(&a, &ws_adjoint(&a)).unwrap();
        assert_eq!(p.offset(), 0);
        let id = WeightedShiftOperator::identity(7, 2);
        assert!(ws_sub(&p, &id).unwrap().norm() < 1e-15);
    }

    #[test]
    fn subtraction_requires_equal_offsets() {
        let a = WeightedShiftOperator::identity(4, 1);
        let b = WeightedShiftOperator::constant(4, 1, &ComplexMatrix::identity(1)).unwrap();
        assert!(matches!(ws_sub(&a, &b), Err(Error::OffsetMismatch { left: 0, right: 1 })));
    }

    #[test]
    fn dense_cap_enforced() {
        let a = WeightedShiftOperator::identity(4097, 1);
        assert!(matches!(a.densify(), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn two_ring_operations_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = WeightedShiftOperator2D::from_fn((3, 4), (1, 2), 2, |_, _| ginibre(2, 2, &mut rng)).unwrap();
        let b = WeightedShiftOperator2D::from_fn((3, 4), (2, 3), 2, |_, _| ginibre(2, 2, &mut rng)).unwrap();
        let (da, db) = (a.densify().unwrap(), b.densify().unwrap());
        assert!(a.mul(&b).unwrap().densify().unwrap().max_abs_diff(&(&da * &db)) < 1e-12);
        assert!(a.adjoint().densify().unwrap().max_abs_diff(&da.adjoint()) < 1e-15);
        assert!((a.norm() - da.operator_norm()).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn densification_is_a_homomorphism(
            seed in any::<u64>(),
            dim in 1usize..=6,
            ring in 1usize..=16,
            p in 0i64..16,
            r in 0i64..16,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_ws(&mut rng, ring, dim, p);
            let b = random_ws(&mut rng, ring, dim, r);
            let (da, db) = (a.densify().unwrap(), b.densify().unwrap());
            prop_assert!(a.mul(&b).unwrap().densify().unwrap().max_abs_diff(&(&da * &db)) <= 1e-12);
            prop_assert!(a.adjoint().densify().unwrap().max_abs_diff(&da.adjoint()) <= 1e-14);
            let dense = da.operator_norm();
            prop_assert!((a.norm() - dense).abs() <= 1e-10 * dense.max(1.0));
            let c = random_ws(&mut rng, ring, dim, p);
            let dc = c.densify().unwrap();
            prop_assert!(a.sub(&c).unwrap().densify().unwrap().max_abs_diff(&(&da - &dc)) <= 1e-14);
        }
    }
}
