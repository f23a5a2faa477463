//! Seeded random matrix ensembles.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::matrix::{ComplexMatrix, C64};

/// Standard complex Gaussian sample with `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    ginibre(n, n, rng).hermitian_part()
}

/// Orthonormalizes columns by modified Gram-Schmidt with re-orthogonalization.
pub(crate) fn gram_schmidt(cols: &mut [Vec<C64>]) {
    for j in 0..cols.len() {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let proj: C64 = head[i].iter().zip(&tail[0]).map(|(a, b)| a.conj() * b).sum();
                for (x, a) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= proj * a;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in cols[j].iter_mut() {
            *x /= norm;
        }
    }
}

/// `rows x cols` isometry whose columns are Haar distributed.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(cols <= rows, "isometry needs cols <= rows");
    let mut columns: Vec<Vec<C64>> = (0..cols)
        .map(|_| (0..rows).map(|_| complex_gaussian(rng)).collect())
        .collect();
    gram_schmidt(&mut columns);
    ComplexMatrix::from_columns(&columns)
}

/// Haar-distributed unitary.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    random_isometry(n, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 12] {
            assert!(haar_unitary(n, &mut rng).unitarity_drift() < 1e-13);
        }
    }

    #[test]
    fn isometry_columns_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_isometry(7, 3, &mut rng);
        assert!(v.isometry_drift() < 1e-13);
    }
}
