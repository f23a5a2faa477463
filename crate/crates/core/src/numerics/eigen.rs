//! Cyclic Jacobi diagonalization for complex Hermitian matrices.

use crate::numerics::matrix::{ComplexMatrix, C64};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f) V*` for a spectral function given by its values.
    pub fn reconstruct(&self, f: &[f64]) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n).map(|k| v[(r, k)] * f[k] * v[(c, k)].conj()).sum()
        })
    }

    /// `V diag(f) V*` for complex spectral values.
    pub fn reconstruct_complex(&self, f: &[C64]) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n).map(|k| v[(r, k)] * f[k] * v[(c, k)].conj()).sum()
        })
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }
}

pub fn hermitian_eigen(m: &ComplexMatrix) -> HermitianEigen {
    let (values, vectors) = jacobi(m, true);
    HermitianEigen {
        values,
        vectors: vectors.expect("vectors requested"),
    }
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    jacobi(m, false).0
}

/// `exp(i t H)` for Hermitian `H`.
pub fn unitary_exp(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let e = hermitian_eigen(h);
    let phases: Vec<C64> = e.values.iter().map(|&l| C64::from_polar(1.0, t * l)).collect();
    e.reconstruct_complex(&phases)
}

/// Largest eigenvalue of the Hermitian part.
pub fn lambda_max(m: &ComplexMatrix) -> f64 {
    *hermitian_eigenvalues(&m.hermitian_part())
        .last()
        .expect("non-empty")
}

fn jacobi(m: &ComplexMatrix, want_vectors: bool) -> (Vec<f64>, Option<ComplexMatrix>) {
    assert!(m.is_square(), "eigen of non-square matrix");
    let n = m.rows();
    let mut a: Vec<C64> = m.hermitian_part().entries().to_vec();
    let mut v = want_vectors.then(|| ComplexMatrix::identity(n).entries().to_vec());

    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let tol = (f64::EPSILON * f64::EPSILON) * total.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q].norm_sqr())
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[p * n + q];
                let h = g.norm();
                if h == 0.0 || h * h <= tol / (n * n) as f64 {
                    continue;
                }
                let phase = g / h;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let tau = (aqq - app) / (2.0 * h);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let ph = phase.conj();
                // V restricted to (p, q): [[c, s], [-s ph, c ph]]
                let vpp = C64::new(c, 0.0);
                let vpq = C64::new(s, 0.0);
                let vqp = -ph * s;
                let vqq = ph * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * vpp + akq * vqp;
                    a[k * n + q] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[q * n + k] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[p * n + q] = C64::new(0.0, 0.0);
                a[q * n + p] = C64::new(0.0, 0.0);
                a[p * n + p] = C64::new(app - t * h, 0.0);
                a[q * n + q] = C64::new(aqq + t * h, 0.0);
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let ekp = v[k * n + p];
                        let ekq = v[k * n + q];
                        v[k * n + p] = ekp * vpp + ekq * vqp;
                        v[k * n + q] = ekp * vpq + ekq * vqq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = v.map(|v| ComplexMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]));
    (values, vectors)
}
