//! The double construction and its diagonal block decomposition.
//!
//! Doubling a step output `(Û_m = U_m ⊗ S, Û_j = Σ_k W_j(k) ⊗ p_k)` gives
//! `Û̂_m = U_m ⊗ S ⊗ S` and `Û̂_j = Σ_{k,r} W_j(k - r) ⊗ p_k ⊗ p_r` with
//! integer labels. The diagonal `ℓ = k - r mod L` reduces every generator,
//! and on it `W_j(ℓ)` is unitarily a gauge rotation of `U_j` by
//! `q[j][m]^{-ℓ}`.

use serde::ser::{SerializeSeq, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::dilation::{
    dilate_full, ring_label, step_with, window_fits, DilationStep, FullDilation, Truncation,
    WindowIsometry,
};
use crate::error::{Error, Result};
use crate::ledger::{Claim, Ledger};
use crate::numerics::io::complex_pair;
use crate::numerics::{cis_turns, ComplexMatrix, WeightedShiftOperator, WeightedShiftOperator2D, C64, DENSE_CAP};
use crate::tuples::{gauge_rotate, DefectMatrix, PhaseMatrix, UnitaryTuple};

/// Block on the diagonal `ℓ`: `(U_m ⊗ S, Σ_t W_j(n_t) ⊗ p_t)` with position
/// `t = r` and `n_t = label(ℓ + t) - label(t)`.
#[derive(Debug, Clone)]
pub struct DiagonalBlock {
    pub ell: usize,
    /// `λ_j(ℓ) = q[j][m]^{-ℓ}` for `j != m`, `1` at `m`.
    pub lambda: Vec<C64>,
    pub tuple: Vec<WeightedShiftOperator>,
}

#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub m: usize,
    pub ring: usize,
    pub base_dim: usize,
    pub blocks: Vec<DiagonalBlock>,
}

impl BlockDecomposition {
    pub fn block_dim(&self) -> usize {
        self.base_dim * self.ring
    }

    /// Position of `e_i ⊗ e_k ⊗ e_r` in the direct sum of blocks.
    pub fn position(&self, i: usize, k: usize, r: usize) -> usize {
        let l = self.ring;
        let ell = (k + l - r) % l;
        ell * self.block_dim() + i * l + r
    }

    /// `perm[a]` is the block position of double-ring basis index `a`.
    pub fn permutation(&self) -> Vec<usize> {
        let l = self.ring;
        let mut perm = vec![0; self.base_dim * l * l];
        for i in 0..self.base_dim {
            for k in 0..l {
                for r in 0..l {
                    perm[(i * l + k) * l + r] = self.position(i, k, r);
                }
            }
        }
        perm
    }

    pub fn gauge_points(&self) -> Vec<Vec<C64>> {
        self.blocks.iter().map(|b| b.lambda.clone()).collect()
    }
}

struct BlockSummary<'a>(&'a DiagonalBlock, usize);

impl Serialize for BlockSummary<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("DiagonalBlock", 3)?;
        st.serialize_field("ell", &self.0.ell)?;
        let lambda: Vec<_> = self.0.lambda.iter().map(|&z| complex_pair(z)).collect();
        st.serialize_field("lambda", &lambda)?;
        st.serialize_field("blockDim", &self.1)?;
        st.end()
    }
}

impl Serialize for BlockDecomposition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.blocks.len()))?;
        for b in &self.blocks {
            seq.serialize_element(&BlockSummary(b, self.block_dim()))?;
        }
        seq.end()
    }
}

/// Output of the double construction applied to one dilation step.
#[derive(Debug, Clone)]
pub struct ReverseStep {
    pub step: DilationStep,
    pub doubled: Vec<WeightedShiftOperator2D>,
    pub blocks: BlockDecomposition,
    /// `||Û_i - ι₂* Û̂_i ι₂||` per generator.
    pub errors: Vec<f64>,
    /// `||Û_j (U_m ⊗ 1) - q[m][j] (U_m ⊗ 1) Û_j||` per generator (0 at `m`).
    pub diagonal_defects: Vec<f64>,
    /// Largest `||U_m^{-ℓ} W_j(n_t) U_m^{ℓ} - λ_j(ℓ) U_j||`.
    pub gauge_deviation: f64,
    /// Entrywise residual of the permutation identity when it fits the dense cap.
    pub permutation_residual: Option<f64>,
    /// Largest commutation defect over all blocks.
    pub block_defect: f64,
    pub ledger: Ledger,
}

impl ReverseStep {
    pub fn error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn densify(&self) -> Result<Vec<ComplexMatrix>> {
        self.doubled.iter().map(WeightedShiftOperator2D::densify).collect()
    }
}

fn check_provenance(step: &DilationStep) -> Result<()> {
    let u = &step.input;
    let l = step.ring();
    let m = step.m;
    if step.output.len() != u.d() || step.theta.d() != u.d() {
        return Err(Error::Provenance("tuple length differs from step input".into()));
    }
    let um = u.get(m);
    let shift = &step.output[m];
    if shift.ring_size() != l || shift.offset() != 1 || shift.block_dim() != u.dim() {
        return Err(Error::Provenance(format!("generator {m} is not U_m ⊗ S")));
    }
    if (0..l).any(|k| shift.weight(k).is_none_or(|w| w.max_abs_diff(um) > 1e-10)) {
        return Err(Error::Provenance(format!("generator {m} is not U_m ⊗ S")));
    }
    for j in (0..u.d()).filter(|&j| j != m) {
        let op = &step.output[j];
        let w1 = (&(um * u.get(j)) * &um.adjoint()).scale(step.theta.q(m, j));
        let ok = op.offset() == 0
            && op.ring_size() == l
            && op.weight(0).is_some_and(|w| w.max_abs_diff(u.get(j)) <= 1e-10)
            && op.weight(1).is_some_and(|w| w.max_abs_diff(&w1) <= 1e-10);
        if !ok {
            return Err(Error::Provenance(format!("generator {j} does not match the step input")));
        }
    }
    Ok(())
}

/// Structured commutation defects of a tuple of one-ring operators.
pub(crate) fn structured_defect(ops: &[WeightedShiftOperator], theta: &PhaseMatrix) -> Result<DefectMatrix> {
    let d = ops.len();
    let mut values = vec![vec![0.0; d]; d];
    for k in 0..d {
        for l in 0..d {
            if k != l {
                values[k][l] = ops[l]
                    .mul(&ops[k])?
                    .sub(&ops[k].mul(&ops[l])?.scale(theta.q(k, l)))?
                    .norm();
            }
        }
    }
    Ok(DefectMatrix { d, values })
}

#[derive(Clone, Copy)]
struct Checks {
    blocks: bool,
}

/// Double construction on the second ring of size `ring2`, which must equal
/// the step's ring.
pub fn reverse_dilate_step(step: &DilationStep, ring2: usize) -> Result<ReverseStep> {
    reverse_with(step, ring2, step_delta(step), Checks { blocks: true })
}

fn step_delta(step: &DilationStep) -> f64 {
    step.input_defect.max()
}

fn reverse_with(step: &DilationStep, ring2: usize, delta_ref: f64, checks: Checks) -> Result<ReverseStep> {
    check_provenance(step)?;
    let l = step.ring();
    if ring2 != l {
        return Err(Error::InvalidArgument(format!(
            "second ring {ring2} must equal the step ring {l}"
        )));
    }
    let u = &step.input;
    let (d, m, dim, theta) = (u.d(), step.m, u.dim(), &step.theta);
    let n = step.window.half_width;
    let iota2 = WindowIsometry::new(dim * l, ring2, n)?;
    let xi2 = iota2.ring_vector();
    let um = u.get(m);

    let h = (l / 2) as i64;
    let (lo, hi) = (-h, l as i64 - h - 1);
    let span = hi - lo;
    let orbits: Vec<Option<Vec<ComplexMatrix>>> = (0..d)
        .map(|j| {
            (j != m).then(|| {
                crate::dilation::conjugate_orbit(um, u.get(j), theta.q(m, j), -span, span)
            })
        })
        .collect();
    let w = |j: usize, n: i64| &orbits[j].as_ref().expect("j != m")[(n + span) as usize];

    let mut doubled = Vec::with_capacity(d);
    for j in 0..d {
        if j == m {
            doubled.push(WeightedShiftOperator2D::from_fn((l, l), (1, 1), dim, |_, _| um.clone())?);
        } else {
            doubled.push(WeightedShiftOperator2D::from_fn((l, l), (0, 0), dim, |k, r| {
                w(j, ring_label(k, l) - ring_label(r, l)).clone()
            })?);
        }
    }

    let mut errors = Vec::with_capacity(d);
    for (op, single) in doubled.iter().zip(&step.output) {
        errors.push(op.compress_second(&xi2)?.sub(single)?.norm());
    }

    let um_id = WeightedShiftOperator::constant(l, 0, um)?;
    let mut diagonal_defects = vec![0.0; d];
    for j in (0..d).filter(|&j| j != m) {
        let a = &step.output[j];
        diagonal_defects[j] = a
            .mul(&um_id)?
            .sub(&um_id.mul(a)?.scale(theta.q(m, j)))?
            .norm();
    }

    let blocks: Vec<DiagonalBlock> = (0..l)
        .map(|ell| {
            let lambda: Vec<C64> = (0..d)
                .map(|j| {
                    if j == m {
                        C64::new(1.0, 0.0)
                    } else {
                        theta.q_pow(j, m, -(ell as i64))
                    }
                })
                .collect();
            let tuple = (0..d)
                .map(|j| {
                    if j == m {
                        WeightedShiftOperator::constant(l, 1, um)
                    } else {
                        WeightedShiftOperator::from_fn(l, 0, dim, |t| {
                            w(j, ring_label((ell + t) % l, l) - ring_label(t, l)).clone()
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DiagonalBlock { ell, lambda, tuple })
        })
        .collect::<Result<Vec<_>>>()?;
    let decomposition = BlockDecomposition {
        m,
        ring: l,
        base_dim: dim,
        blocks,
    };

    let mut gauge_deviation: f64 = 0.0;
    let mut block_defect: f64 = 0.0;
    let mut permutation_residual = None;
    if checks.blocks {
        for block in &decomposition.blocks {
            let p = um.unitary_pow(block.ell as i64);
            let pa = p.adjoint();
            for j in (0..d).filter(|&j| j != m) {
                let target = u.get(j).scale(block.lambda[j]);
                for wt in block.tuple[j].weights().values() {
                    let back = &(&pa * wt) * &p;
                    gauge_deviation = gauge_deviation.max((&back - &target).operator_norm());
                }
            }
            block_defect = block_defect.max(structured_defect(&block.tuple, theta)?.max());
        }
        if dim * l * l <= DENSE_CAP {
            permutation_residual = Some(permutation_identity_residual(&doubled, &decomposition)?);
        }
    }

    let tag = format!("reverse{m}");
    let mut ledger = Ledger::new();
    ledger.push(Claim::at_most(
        format!("{tag}.compression.U{m} <= 1/(2N+1)"),
        iota2.shift_term(),
        errors[m],
    ));
    let mut delta_eff: f64 = 0.0;
    for j in (0..d).filter(|&j| j != m) {
        ledger.push(Claim::at_most(
            format!("{tag}.compression.U{j} <= N(N+1)/(2N+1)*defect({m},{j})"),
            iota2.diagonal_factor() * diagonal_defects[j],
            errors[j],
        ));
        ledger.push(Claim::at_most(
            format!("{tag}.diagonal_defect({m},{j}) == input defect"),
            1e-10,
            (diagonal_defects[j] - step.input_defect.get(m, j)).abs(),
        ));
        delta_eff = delta_eff.max(diagonal_defects[j]);
    }
    let allowance = iota2.diagonal_factor() * (delta_eff - delta_ref).max(0.0);
    if window_fits(n, delta_ref) {
        ledger.push(Claim::at_most(
            format!("{tag}.rD < sqrt(delta) + allowance"),
            delta_ref.sqrt() + allowance,
            errors.iter().copied().fold(0.0, f64::max),
        ));
    }
    if checks.blocks {
        if let Some(res) = permutation_residual {
            ledger.push(Claim::at_most(format!("{tag}.permutation_identity"), 1e-12, res));
        }
        let max_wrap = step.wrap.iter().copied().fold(0.0, f64::max);
        ledger.push(Claim::at_most(
            format!("{tag}.block_defect <= input defect + wraparound"),
            step.input_defect.max() + max_wrap,
            block_defect,
        ));
        ledger.measure(format!("{tag}.gauge_deviation"), gauge_deviation);
        ledger.measure(format!("{tag}.block_defect"), block_defect);
    }
    ledger.measure(format!("{tag}.allowance"), allowance);

    Ok(ReverseStep {
        step: step.clone(),
        doubled,
        blocks: decomposition,
        errors,
        diagonal_defects,
        gauge_deviation,
        permutation_residual,
        block_defect,
        ledger,
    })
}

/// `max |D[a, b] - (⊕ B_ℓ)[π a, π b]|` over all generators.
pub fn permutation_identity_residual(
    doubled: &[WeightedShiftOperator2D],
    blocks: &BlockDecomposition,
) -> Result<f64> {
    let perm = blocks.permutation();
    let bd = blocks.block_dim();
    let mut worst: f64 = 0.0;
    for (j, op) in doubled.iter().enumerate() {
        let dense = op.densify()?;
        let parts = blocks
            .blocks
            .iter()
            .map(|b| b.tuple[j].densify())
            .collect::<Result<Vec<_>>>()?;
        let n = dense.rows();
        for a in 0..n {
            for b in 0..n {
                let (pa, pb) = (perm[a], perm[b]);
                let expect = if pa / bd == pb / bd {
                    parts[pa / bd][(pa % bd, pb % bd)]
                } else {
                    C64::new(0.0, 0.0)
                };
                worst = worst.max((dense[(a, b)] - expect).norm());
            }
        }
    }
    Ok(worst)
}

/// Double construction for a single pair `vu ≈ q uv` with `u` as the shifted
/// generator.
pub fn reverse_dilate_pair(
    u: &ComplexMatrix,
    v: &ComplexMatrix,
    q: C64,
    ring1: usize,
    ring2: usize,
    window: Option<usize>,
) -> Result<ReverseStep> {
    if (q.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnimodular { value: format!("{q}") });
    }
    let theta = PhaseMatrix::float_pair(q.arg() / std::f64::consts::TAU)?;
    let tuple = UnitaryTuple::new(vec![u.clone(), v.clone()])?;
    let step = crate::dilation::dilate_step(
        &tuple,
        &theta,
        0,
        Truncation {
            ring: Some(ring1),
            window,
        },
    )?;
    reverse_dilate_step(&step, ring2)
}

/// Number of gauge points listed explicitly in a [`LambdaReport`].
pub const LAMBDA_LISTING: usize = 64;

/// Per-step gauge data: the `L` diagonal points and the `L` Fourier phases
/// `e^{2πi t/L}` that diagonalize the shift at coordinate `m`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepLambda {
    pub m: usize,
    pub ring: usize,
    pub diagonal: BlockDecomposition,
    pub fourier_count: usize,
}

/// The finite gauge set of the truncated chain.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LambdaReport {
    pub steps: Vec<StepLambda>,
    /// `Π_m L_m^2`.
    pub total_count: f64,
    #[serde(serialize_with = "serialize_points")]
    pub listing: Vec<Vec<C64>>,
    pub truncated: bool,
}

fn serialize_points<S: Serializer>(pts: &[Vec<C64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<_>> = pts
        .iter()
        .map(|p| p.iter().map(|&z| complex_pair(z)).collect())
        .collect();
    rows.serialize(s)
}

fn lambda_report(reverse: &[ReverseStep], d: usize) -> LambdaReport {
    // Per-step point sets of size L^2: λ(ℓ) with coordinate m times e^{2πi t/L}.
    let sets: Vec<Vec<Vec<C64>>> = reverse
        .iter()
        .map(|r| {
            let l = r.blocks.ring;
            let mut pts = Vec::with_capacity(l * l);
            for b in &r.blocks.blocks {
                for t in 0..l {
                    let mut p = b.lambda.clone();
                    p[r.blocks.m] *= cis_turns(t as f64 / l as f64);
                    pts.push(p);
                }
            }
            pts
        })
        .collect();
    let total_count: f64 = sets.iter().map(|s| s.len() as f64).product();
    let mut listing = Vec::new();
    let mut idx = vec![0usize; sets.len()];
    'outer: while listing.len() < LAMBDA_LISTING {
        let mut p = vec![C64::new(1.0, 0.0); d];
        for (s, &i) in sets.iter().zip(&idx) {
            for (a, b) in p.iter_mut().zip(&s[i]) {
                *a *= b;
            }
        }
        listing.push(p);
        for pos in (0..idx.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                continue 'outer;
            }
            idx[pos] = 0;
        }
        break;
    }
    LambdaReport {
        steps: reverse
            .iter()
            .map(|r| StepLambda {
                m: r.blocks.m,
                ring: r.blocks.ring,
                diagonal: r.blocks.clone(),
                fourier_count: r.blocks.ring,
            })
            .collect(),
        total_count,
        truncated: (listing.len() as f64) < total_count,
        listing,
    }
}

/// Number of gauge points used for the direct-sum sup-form check per step.
pub const SUP_FORM_SAMPLES: usize = 16;

#[derive(Debug, Clone)]
pub struct UtagPipeline {
    pub full: FullDilation,
    pub reverse: Vec<ReverseStep>,
    pub lambda: LambdaReport,
    pub sum_forward: f64,
    pub sum_reverse: f64,
    pub ledger: Ledger,
}

/// Forward dilation followed by the double construction at every step.
pub fn utag_pipeline(u: &UnitaryTuple, theta: &PhaseMatrix, trunc: Truncation) -> Result<UtagPipeline> {
    let full = dilate_full(u, theta, trunc)?;
    let delta = full.delta;
    let d = u.d();
    let mut ledger = Ledger::new();
    ledger.extend(&full.ledger);

    let mut reverse = Vec::with_capacity(full.steps.len());
    for step in &full.steps {
        let rev = reverse_with(step, step.ring(), delta, Checks { blocks: true })?;
        ledger.extend(&rev.ledger);
        sup_form_check(step, &rev, delta, &mut ledger)?;
        reverse.push(rev);
    }

    let sum_forward = full.sum_errors;
    let sum_reverse: f64 = reverse.iter().map(ReverseStep::error).sum();
    if window_fits(full.half_width, delta) {
        let allowance: f64 = reverse
            .iter()
            .map(|r| {
                let w = &r.step.window;
                let eff = r.diagonal_defects.iter().copied().fold(0.0, f64::max);
                w.diagonal_factor() * (eff - delta).max(0.0)
            })
            .sum();
        ledger.push(Claim::at_most(
            "utag.rD(U -> V) < (d-1)*sqrt(delta) + allowance",
            (d - 1) as f64 * delta.sqrt() + full.allowance,
            sum_forward,
        ));
        ledger.push(Claim::at_most(
            "utag.rD(V -> U') < (d-1)*sqrt(delta) + allowance",
            (d - 1) as f64 * delta.sqrt() + allowance,
            sum_reverse,
        ));
    } else {
        let bound = |r: &ReverseStep| {
            let w = &r.step.window;
            let eff = r.diagonal_defects.iter().copied().fold(0.0, f64::max);
            w.shift_term().max(w.diagonal_factor() * eff)
        };
        ledger.push(Claim::at_most(
            "utag.rD(V -> U') <= sum of window bounds",
            reverse.iter().map(bound).sum(),
            sum_reverse,
        ));
    }
    let lambda = lambda_report(&reverse, d);
    ledger.measure("utag.sum_forward", sum_forward);
    ledger.measure("utag.sum_reverse", sum_reverse);
    ledger.measure("utag.lambda_count", lambda.total_count);

    Ok(UtagPipeline {
        full,
        reverse,
        lambda,
        sum_forward,
        sum_reverse,
        ledger,
    })
}

/// Rotates the step input by sampled gauge points, reruns both constructions,
/// and checks that the direct sum of the per-point errors is their supremum
/// and matches the unrotated error.
fn sup_form_check(step: &DilationStep, rev: &ReverseStep, delta: f64, ledger: &mut Ledger) -> Result<()> {
    let points: Vec<&Vec<C64>> = rev
        .blocks
        .blocks
        .iter()
        .map(|b| &b.lambda)
        .take(SUP_FORM_SAMPLES)
        .collect();
    let d = step.input.d();
    let l = step.ring();
    let n = step.window.half_width;
    let mut per_point = Vec::with_capacity(points.len());
    let mut diff_blocks: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); d];
    for lambda in &points {
        let rotated = gauge_rotate(&step.input, lambda)?;
        let s = step_with(&rotated, &step.theta, step.m, l, n, delta)?;
        let r = reverse_with(&s, l, delta, Checks { blocks: false })?;
        per_point.push(r.error());
        for (i, (op, single)) in r.doubled.iter().zip(&s.output).enumerate() {
            let c = op.compress_second(&WindowIsometry::new(s.input.dim() * l, l, n)?.ring_vector())?;
            let diff = c.sub(single)?;
            // Densified gaps are block-diagonal in the sum over gauge points.
            diff_blocks[i].push(collapse(&diff));
        }
    }
    let sup = per_point.iter().copied().fold(0.0, f64::max);
    let direct = diff_blocks
        .iter()
        .map(|parts| {
            let count = parts.len();
            WeightedShiftOperator::from_fn(count, 0, parts[0].rows(), |k| parts[k].clone())
                .map(|w| w.norm())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let spread = per_point
        .iter()
        .map(|e| (e - rev.error()).abs())
        .fold(0.0, f64::max);
    let tag = format!("utag.step{}", step.m);
    ledger.push(Claim::at_most(format!("{tag}.sup_form"), sup, direct));
    ledger.push(Claim::at_most(format!("{tag}.gauge_invariance"), 1e-10, spread));
    Ok(())
}

/// Block-diagonal matrix of the blocks of a one-ring operator, as a single
/// block whose norm equals the operator norm.
fn collapse(a: &WeightedShiftOperator) -> ComplexMatrix {
    let parts: Vec<&ComplexMatrix> = a.weights().values().collect();
    ComplexMatrix::direct_sum(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::dilate_step;
    use crate::tuples::{clock, perturb_to_defect, random_almost_commuting_pair, shift, weyl_tuple};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn compress_second_matches_full_compression() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let op = WeightedShiftOperator2D::from_fn((6, 6), (1, 1), 2, |_, _| {
            crate::numerics::random::ginibre(2, 2, &mut rng)
        })
        .unwrap();
        let xi = WindowIsometry::new(2, 6, 2).unwrap().ring_vector();
        let a = op.compress_second(&xi).unwrap().compress_with(&xi).unwrap();
        let b = op.compress_with(&xi, &xi).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn weyl_pair_blocks_are_gauge_rotations() {
        let q = cis_turns(1.0 / 8.0);
        let rev = reverse_dilate_pair(&clock(8), &shift(8), q, 8, 8, Some(3)).unwrap();
        assert_eq!(rev.blocks.blocks.len(), 8);
        assert!(rev.gauge_deviation < 1e-12);
        assert!(rev.permutation_residual.unwrap() < 1e-12);
        assert!(rev.ledger.all_pass(), "{:?}", rev.ledger.failures().collect::<Vec<_>>());
        // ℓ = 0 is (u ⊗ S, v ⊗ id).
        let b0 = &rev.blocks.blocks[0];
        for t in 0..8 {
            assert!(b0.tuple[1].weight(t).unwrap().max_abs_diff(&shift(8)) < 1e-12);
        }
    }

    #[test]
    fn pair_and_step_agree_for_d2() {
        let theta = PhaseMatrix::rational_upper(2, &[(3, 8)]).unwrap();
        let w = weyl_tuple(&theta).unwrap();
        let step = dilate_step(&w, &theta, 0, Truncation { ring: Some(8), window: Some(2) }).unwrap();
        let a = reverse_dilate_step(&step, 8).unwrap();
        let b = reverse_dilate_pair(w.get(0), w.get(1), theta.q(0, 1), 8, 8, Some(2)).unwrap();
        for (x, y) in a.doubled.iter().zip(&b.doubled) {
            assert!(x.sub(y).unwrap().norm() < 1e-12);
        }
        for (x, y) in a.errors.iter().zip(&b.errors) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_mismatch_and_provenance() {
        let theta = PhaseMatrix::rational_upper(2, &[(1, 4)]).unwrap();
        let w = weyl_tuple(&theta).unwrap();
        let step = dilate_step(&w, &theta, 1, Truncation { ring: Some(8), window: Some(2) }).unwrap();
        assert!(reverse_dilate_step(&step, 10).is_err());
        let mut forged = step.clone();
        forged.output[0] = WeightedShiftOperator::identity(8, w.dim());
        assert!(matches!(reverse_dilate_step(&forged, 8), Err(Error::Provenance(_))));
    }

    #[test]
    fn gauge_points_are_exact_powers() {
        let theta = PhaseMatrix::rational_upper(3, &[(1, 8), (3, 4), (1, 2)]).unwrap();
        let w = weyl_tuple(&theta).unwrap();
        for m in 0..3 {
            let step = dilate_step(&w, &theta, m, Truncation { ring: Some(8), window: Some(2) }).unwrap();
            let rev = reverse_dilate_step(&step, 8).unwrap();
            for b in &rev.blocks.blocks {
                for j in 0..3 {
                    let expect = if j == m {
                        C64::new(1.0, 0.0)
                    } else {
                        theta.q_pow(j, m, -(b.ell as i64))
                    };
                    assert_eq!(b.lambda[j], expect);
                }
            }
            assert!(rev.gauge_deviation < 1e-12);
            assert!(rev.permutation_residual.unwrap() < 1e-12);
        }
    }

    #[test]
    fn block_json_shape() {
        let q = cis_turns(0.25);
        let rev = reverse_dilate_pair(&clock(4), &shift(4), q, 4, 4, Some(1)).unwrap();
        let v = serde_json::to_value(&rev.blocks).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 4);
        assert_eq!(arr[1]["ell"], 1);
        assert_eq!(arr[1]["blockDim"], 16);
        assert_eq!(arr[1]["lambda"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn pipeline_on_perturbed_d3() {
        let theta = PhaseMatrix::rational_upper(3, &[(1, 2), (1, 2), (0, 1)]).unwrap();
        let base = weyl_tuple(&theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = perturb_to_defect(&base, &theta, 0.01, &mut rng).unwrap();
        let p = utag_pipeline(&u, &theta, Truncation::default()).unwrap();
        assert!(p.ledger.all_pass(), "{:?}", p.ledger.failures().collect::<Vec<_>>());
        assert!(p.sum_reverse < 0.2);
        assert_eq!(p.lambda.listing.len(), LAMBDA_LISTING);
    }

    #[test]
    fn exact_pipeline_collapses_to_window_terms() {
        let theta = PhaseMatrix::rational_upper(2, &[(1, 3)]).unwrap();
        let w = weyl_tuple(&theta).unwrap();
        let p = utag_pipeline(&w, &theta, Truncation { ring: Some(6), window: Some(2) }).unwrap();
        assert!(p.ledger.all_pass(), "{:?}", p.ledger.failures().collect::<Vec<_>>());
        assert!((p.sum_reverse - 0.2).abs() < 1e-12);
        assert!((p.sum_forward - 0.2).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn random_pair_ledger(seed in any::<u64>(), delta in 0.002f64..0.1, ring in 4usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v, q) = random_almost_commuting_pair(3, delta, &mut rng).unwrap();
            let rev = reverse_dilate_pair(&u, &v, q, ring, ring, Some((ring - 2) / 2)).unwrap();
            prop_assert!(rev.permutation_residual.unwrap() <= 1e-12);
            prop_assert!(rev.ledger.all_pass());
        }
    }
}
