//! Seeded fixtures shared by the benchmarks.

use dlab_core::numerics::random::random_isometry;
use dlab_core::tuples::{perturb_to_defect, random_almost_commuting_pair, weyl_tuple};
use dlab_core::{ComplexMatrix, PhaseMatrix, UnitaryTuple, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pair of dimension `m` with defect `delta`.
pub fn pair(m: usize, delta: f64) -> (ComplexMatrix, ComplexMatrix, C64) {
    random_almost_commuting_pair(m, delta, &mut rng(m as u64)).expect("pair fixture")
}

/// δ-almost Θ-commuting perturbation of the Weyl tuple of `theta`.
pub fn perturbed(theta: &PhaseMatrix, delta: f64) -> UnitaryTuple {
    let base = weyl_tuple(theta).expect("rational Θ");
    perturb_to_defect(&base, theta, delta, &mut rng(7)).expect("perturbation fixture")
}

pub fn golden() -> PhaseMatrix {
    PhaseMatrix::irrational_pair("golden", (5f64.sqrt() - 1.0) / 2.0).expect("golden Θ")
}

/// Compression of `a` to level `n` by a seeded isometry.
pub fn compression(a: &UnitaryTuple, n: usize) -> Vec<ComplexMatrix> {
    let v = random_isometry(a.dim(), n, &mut rng(11));
    a.matrices().iter().map(|m| &(&v.adjoint() * m) * &v).collect()
}
