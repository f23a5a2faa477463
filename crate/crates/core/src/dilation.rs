//! Forward dilations on cyclic truncations.
//!
//! The bilateral shift is replaced by the cyclic shift on `Z_L`. Ring slot
//! `r` carries the integer label [`ring_label`], so a window centred at 0
//! occupies labels `-N..=N`.

use num_integer::Integer;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ledger::{Claim, Ledger};
use crate::numerics::{ComplexMatrix, WeightedShiftOperator, C64, DENSE_CAP};
use crate::tuples::{
    commutation_defect, gauge_rotate, pair_defect, tuple_distance, weyl_tuple, DefectMatrix,
    PhaseMatrix, UnitaryTuple,
};

/// Integer label of ring slot `r`: slots `0..L-h` map to `0..L-h`, the rest
/// to `-h..0`, with `h = floor(L/2)`.
pub fn ring_label(r: usize, ring: usize) -> i64 {
    let h = ring / 2;
    if r < ring - h {
        r as i64
    } else {
        r as i64 - ring as i64
    }
}

/// Ring slot holding integer label `k`.
pub fn ring_slot(k: i64, ring: usize) -> usize {
    k.rem_euclid(ring as i64) as usize
}

/// Slot whose successor wraps from the largest label to the smallest.
pub fn wrap_slot(ring: usize) -> usize {
    ring - ring / 2 - 1
}

/// `ι = id_m ⊗ ξ_N` with `ξ_N` uniform on labels `-N..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowIsometry {
    pub base_dim: usize,
    pub ring_size: usize,
    pub half_width: usize,
}

impl WindowIsometry {
    pub fn new(base_dim: usize, ring_size: usize, half_width: usize) -> Result<Self> {
        let needed = 2 * half_width + 2;
        if ring_size < needed {
            return Err(Error::RingTooSmall {
                ring: ring_size,
                window: half_width,
                needed,
            });
        }
        if base_dim == 0 {
            return Err(Error::InvalidArgument("base dimension must be positive".into()));
        }
        Ok(Self {
            base_dim,
            ring_size,
            half_width,
        })
    }

    /// `ξ_N` as a vector on the ring.
    pub fn ring_vector(&self) -> Vec<f64> {
        let n = self.half_width as i64;
        let c = 1.0 / ((2 * n + 1) as f64).sqrt();
        let mut xi = vec![0.0; self.ring_size];
        for k in -n..=n {
            xi[ring_slot(k, self.ring_size)] = c;
        }
        xi
    }

    /// Dense `(m L) x m` matrix of `ι`.
    pub fn dense(&self) -> Result<ComplexMatrix> {
        let big = self.base_dim * self.ring_size;
        if big > DENSE_CAP {
            return Err(Error::SizeCap { dim: big, cap: DENSE_CAP });
        }
        let xi = self.ring_vector();
        let l = self.ring_size;
        Ok(ComplexMatrix::from_fn(big, self.base_dim, |row, col| {
            if row / l == col {
                C64::new(xi[row % l], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// `1 / (2N + 1)`: the exact compression error of `u ⊗ S`.
    pub fn shift_term(&self) -> f64 {
        1.0 / (2 * self.half_width + 1) as f64
    }

    /// `N (N + 1) / (2N + 1)`: the factor multiplying δ for diagonal parts.
    pub fn diagonal_factor(&self) -> f64 {
        let n = self.half_width as f64;
        n * (n + 1.0) / (2.0 * n + 1.0)
    }
}

/// Least `N >= 1` with `(N + 1)/2 < δ^{-1/2} < 2N + 1`.
pub fn choose_window(delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let upper = (2.0 / delta.sqrt()).ceil() as usize + 2;
    (1..=upper)
        .find(|&n| window_fits(n, delta))
        .ok_or(Error::DeltaOutOfRange(delta))
}

/// Whether `N` satisfies `(N + 1)/2 < δ^{-1/2} < 2N + 1`.
pub fn window_fits(n: usize, delta: f64) -> bool {
    let n = n as f64;
    delta > 0.0
        && (n + 1.0) * (n + 1.0) * delta < 4.0
        && (2.0 * n + 1.0) * (2.0 * n + 1.0) * delta > 1.0
}

/// Defects at or below this level count as exact commutation.
pub const EXACT_DEFECT: f64 = 1e-12;

/// `ι* A ι` for a structured operator.
pub fn compress(a: &WeightedShiftOperator, iota: &WindowIsometry) -> Result<ComplexMatrix> {
    if a.ring_size() != iota.ring_size || a.block_dim() != iota.base_dim {
        return Err(Error::Shape(format!(
            "window on (m={}, L={}) applied to operator on (m={}, L={})",
            iota.base_dim,
            iota.ring_size,
            a.block_dim(),
            a.ring_size()
        )));
    }
    a.compress_with(&iota.ring_vector())
}

/// `ι* A ι` for a dense operator on `C^m ⊗ C^L`.
pub fn compress_dense(a: &ComplexMatrix, iota: &WindowIsometry) -> Result<ComplexMatrix> {
    let (m, l) = (iota.base_dim, iota.ring_size);
    if a.shape() != (m * l, m * l) {
        return Err(Error::Shape(format!(
            "dense operator is {}x{}, window expects {}",
            a.rows(),
            a.cols(),
            m * l
        )));
    }
    let xi = iota.ring_vector();
    let support: Vec<usize> = (0..l).filter(|&k| xi[k] != 0.0).collect();
    Ok(ComplexMatrix::from_fn(m, m, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for &k in &support {
            for &k2 in &support {
                acc += a[(i * l + k, j * l + k2)] * (xi[k] * xi[k2]);
            }
        }
        acc
    }))
}

/// `n -> q^n u^n v u^{-n}` for labels `lo..=hi`, built by repeated conjugation.
pub(crate) fn conjugate_orbit(
    u: &ComplexMatrix,
    v: &ComplexMatrix,
    q: C64,
    lo: i64,
    hi: i64,
) -> Vec<ComplexMatrix> {
    assert!(lo <= 0 && hi >= 0);
    let ua = u.adjoint();
    let mut pos = vec![v.clone()];
    for _ in 0..hi {
        let last = pos.last().expect("non-empty");
        pos.push((&(u * last) * &ua).scale(q));
    }
    let mut neg = Vec::new();
    let mut cur = v.clone();
    for _ in 0..(-lo) {
        cur = (&(&ua * &cur) * u).scale(q.conj());
        neg.push(cur.clone());
    }
    neg.reverse();
    neg.extend(pos);
    neg
}

/// Truncation parameters; `None` selects the documented defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Truncation {
    pub ring: Option<usize>,
    pub window: Option<usize>,
}

/// Window used for exactly commuting input when none is given.
pub const DEFAULT_EXACT_WINDOW: usize = 4;

fn resolve_window(delta: f64, requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(n) => Ok(n),
        None if delta <= EXACT_DEFECT => Ok(DEFAULT_EXACT_WINDOW),
        None => choose_window(delta),
    }
}

/// Least multiple of the phase orders in row `m` that is at least `2N + 2`,
/// or `2N + 2` itself when the row is irrational or the multiple is large.
pub fn default_ring(theta: &PhaseMatrix, m: usize, window: usize) -> usize {
    let base = 2 * window + 2;
    let order = (0..theta.d())
        .filter(|&j| j != m)
        .try_fold(1i64, |acc, j| theta.rational(m, j).map(|r| acc.lcm(r.denom())));
    match order {
        Some(c) => {
            let c = c as usize;
            let mult = base.div_ceil(c) * c;
            if mult <= 8 * base {
                mult
            } else {
                base
            }
        }
        None => base,
    }
}

/// Output of the pair construction.
#[derive(Debug, Clone)]
pub struct PairDilation {
    pub u_tilde: WeightedShiftOperator,
    pub v_tilde: WeightedShiftOperator,
    pub window: WindowIsometry,
    pub q: C64,
    /// `||v u - q u v||` of the input.
    pub delta: f64,
    pub compressed_u: ComplexMatrix,
    pub compressed_v: ComplexMatrix,
    pub error_u: f64,
    pub error_v: f64,
    /// Largest block of `ṽũ - q ũṽ` away from the wrap slot.
    pub interior_defect: f64,
    /// `||q^L u^L v u^{-L} - v||`.
    pub wrap_defect: f64,
    /// `||ṽũ - q ũṽ||`.
    pub output_defect: f64,
    pub ledger: Ledger,
}

/// `ũ = u ⊗ S`, `ṽ = Σ_k q^k u^k v u^{-k} ⊗ p_k` on `C^m ⊗ C^L`.
pub fn dilate_pair(
    u: &ComplexMatrix,
    v: &ComplexMatrix,
    q: C64,
    ring: usize,
    window: Option<usize>,
) -> Result<PairDilation> {
    let pair = UnitaryTuple::new(vec![u.clone(), v.clone()])?;
    let (u, v) = (pair.get(0), pair.get(1));
    if (q.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnimodular { value: format!("{q}") });
    }
    if ring < 4 {
        return Err(Error::RingTooSmall {
            ring,
            window: window.unwrap_or(1),
            needed: 4,
        });
    }
    let delta = pair_defect(u, v, q);
    let n = match window {
        Some(n) => n,
        None if delta <= EXACT_DEFECT => (ring - 2) / 2,
        None => choose_window(delta)?,
    };
    let iota = WindowIsometry::new(u.rows(), ring, n)?;
    let h = (ring / 2) as i64;
    let lo = -h;
    let hi = ring as i64 - h - 1;
    let orbit = conjugate_orbit(u, v, q, lo, hi);
    let weight = |label: i64| orbit[(label - lo) as usize].clone();

    let u_tilde = WeightedShiftOperator::constant(ring, 1, u)?;
    let v_tilde = WeightedShiftOperator::from_fn(ring, 0, u.rows(), |r| weight(ring_label(r, ring)))?;

    let compressed_u = compress(&u_tilde, &iota)?;
    let compressed_v = compress(&v_tilde, &iota)?;
    let error_u = (u - &compressed_u).operator_norm();
    let error_v = (v - &compressed_v).operator_norm();

    let comm = v_tilde.mul(&u_tilde)?.sub(&u_tilde.mul(&v_tilde)?.scale(q))?;
    let ws = wrap_slot(ring);
    let mut interior_defect: f64 = 0.0;
    let mut wrap_block = 0.0;
    for (k, norm) in comm.block_norms() {
        if k == ws {
            wrap_block = norm;
        } else {
            interior_defect = interior_defect.max(norm);
        }
    }
    let ul = u.unitary_pow(ring as i64);
    let ql = q.powi(ring as i32);
    let wrap_defect = (&(&(&ul * v) * &ul.adjoint()).scale(ql) - v).operator_norm();
    let output_defect = interior_defect.max(wrap_block);

    let mut ledger = Ledger::new();
    ledger.push(Claim::at_most("pair.compression.u <= 1/(2N+1)", iota.shift_term(), error_u));
    ledger.push(Claim::at_most(
        "pair.compression.v <= N(N+1)/(2N+1)*delta",
        iota.diagonal_factor() * delta,
        error_v,
    ));
    if window_fits(n, delta) {
        ledger.push(Claim::strictly_below(
            "pair.rD < sqrt(delta)",
            delta.sqrt(),
            error_u.max(error_v),
        ));
    }
    ledger.push(Claim::at_most("pair.relation.interior == 0", 1e-12, interior_defect));
    ledger.push(Claim::at_most(
        "pair.wraparound <= L*delta + |q^L - 1|",
        ring as f64 * delta + (ql - 1.0).norm(),
        wrap_defect,
    ));
    ledger.measure("pair.delta", delta);
    ledger.measure("pair.wraparound", wrap_defect);
    ledger.measure("pair.wrap_block", wrap_block);

    Ok(PairDilation {
        u_tilde,
        v_tilde,
        window: iota,
        q,
        delta,
        compressed_u,
        compressed_v,
        error_u,
        error_v,
        interior_defect,
        wrap_defect,
        output_defect,
        ledger,
    })
}

/// One application of the per-generator construction at index `m`.
#[derive(Debug, Clone)]
pub struct DilationStep {
    pub m: usize,
    pub input: UnitaryTuple,
    pub theta: PhaseMatrix,
    pub window: WindowIsometry,
    /// `Û_m = U_m ⊗ S`, `Û_j = Σ_k q[m][j]^k U_m^k U_j U_m^{-k} ⊗ p_k`.
    pub output: Vec<WeightedShiftOperator>,
    pub compressed: Vec<ComplexMatrix>,
    /// `||U_i - ι* Û_i ι||` per generator.
    pub errors: Vec<f64>,
    pub input_defect: DefectMatrix,
    pub output_defect: DefectMatrix,
    /// Largest input defect among pairs involving `m`.
    pub delta_eff: f64,
    /// `||q[m][j]^L U_m^L U_j U_m^{-L} - U_j||` per generator (0 at `m`).
    pub wrap: Vec<f64>,
    /// Largest interior block of the relations involving `m`.
    pub interior_defect: f64,
    /// Largest change of a defect between generators other than `m`.
    pub preserved_deviation: f64,
    pub warnings: Vec<String>,
    pub ledger: Ledger,
}

impl DilationStep {
    pub fn ring(&self) -> usize {
        self.window.ring_size
    }

    pub fn error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn output_dense(&self) -> Result<UnitaryTuple> {
        let mats = self
            .output
            .iter()
            .map(WeightedShiftOperator::densify)
            .collect::<Result<Vec<_>>>()?;
        UnitaryTuple::with_tol(mats, self.input.unitarity_tol())
    }
}

/// Lemma-style repair step at generator `m` with defaults from the input.
pub fn dilate_step(
    u: &UnitaryTuple,
    theta: &PhaseMatrix,
    m: usize,
    trunc: Truncation,
) -> Result<DilationStep> {
    if u.d() != theta.d() {
        return Err(Error::DimensionMismatch { tuple: u.d(), phase: theta.d() });
    }
    if m >= u.d() {
        return Err(Error::IndexOutOfRange { index: m, d: u.d() });
    }
    let delta = commutation_defect(u, theta)?.max();
    let n = resolve_window(delta, trunc.window)?;
    let ring = trunc.ring.unwrap_or_else(|| default_ring(theta, m, n));
    step_with(u, theta, m, ring, n, delta)
}

pub(crate) fn step_with(
    u: &UnitaryTuple,
    theta: &PhaseMatrix,
    m: usize,
    ring: usize,
    n: usize,
    delta_ref: f64,
) -> Result<DilationStep> {
    let d = u.d();
    if d != theta.d() {
        return Err(Error::DimensionMismatch { tuple: d, phase: theta.d() });
    }
    if m >= d {
        return Err(Error::IndexOutOfRange { index: m, d });
    }
    let iota = WindowIsometry::new(u.dim(), ring, n)?;
    let input_defect = commutation_defect(u, theta)?;
    let mut warnings = Vec::new();
    let earlier = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| input_defect.get(i, j))
        .fold(0.0, f64::max);
    if earlier > 1e-10 {
        warnings.push(format!(
            "generators before index {m} are not Θ-commuting (defect {earlier:.3e})"
        ));
    }

    let h = (ring / 2) as i64;
    let (lo, hi) = (-h, ring as i64 - h - 1);
    let um = u.get(m);
    let mut output = Vec::with_capacity(d);
    for j in 0..d {
        if j == m {
            output.push(WeightedShiftOperator::constant(ring, 1, um)?);
        } else {
            let orbit = conjugate_orbit(um, u.get(j), theta.q(m, j), lo, hi);
            output.push(WeightedShiftOperator::from_fn(ring, 0, u.dim(), |r| {
                orbit[(ring_label(r, ring) - lo) as usize].clone()
            })?);
        }
    }

    let compressed = output
        .iter()
        .map(|a| compress(a, &iota))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = u
        .matrices()
        .iter()
        .zip(&compressed)
        .map(|(a, b)| (a - b).operator_norm())
        .collect();

    let ws = wrap_slot(ring);
    let ul = um.unitary_pow(ring as i64);
    let mut wrap = vec![0.0; d];
    let mut interior_defect: f64 = 0.0;
    let mut out_values = vec![vec![0.0; d]; d];
    for k in 0..d {
        for l in 0..d {
            if k == l {
                continue;
            }
            let comm = output[l]
                .mul(&output[k])?
                .sub(&output[k].mul(&output[l])?.scale(theta.q(k, l)))?;
            if k == m || l == m {
                for (slot, norm) in comm.block_norms() {
                    if slot != ws {
                        interior_defect = interior_defect.max(norm);
                    }
                }
            }
            out_values[k][l] = comm.norm();
        }
    }
    for j in (0..d).filter(|&j| j != m) {
        let ql = theta.q_pow(m, j, ring as i64);
        let uj = u.get(j);
        wrap[j] = (&(&(&ul * uj) * &ul.adjoint()).scale(ql) - uj).operator_norm();
    }
    let output_defect = DefectMatrix { d, values: out_values };
    let mut preserved_deviation: f64 = 0.0;
    for k in (0..d).filter(|&k| k != m) {
        for l in (0..d).filter(|&l| l != m) {
            preserved_deviation =
                preserved_deviation.max((output_defect.get(k, l) - input_defect.get(k, l)).abs());
        }
    }
    let delta_eff = input_defect.max_involving(m);

    let mut ledger = Ledger::new();
    let tag = format!("step{m}");
    ledger.push(Claim::at_most(
        format!("{tag}.compression.U{m} <= 1/(2N+1)"),
        iota.shift_term(),
        errors[m],
    ));
    for j in (0..d).filter(|&j| j != m) {
        ledger.push(Claim::at_most(
            format!("{tag}.compression.U{j} <= N(N+1)/(2N+1)*defect({m},{j})"),
            iota.diagonal_factor() * input_defect.get(m, j),
            errors[j],
        ));
    }
    ledger.push(Claim::at_most(
        format!("{tag}.untouched_defects.preserved"),
        1e-10,
        preserved_deviation,
    ));
    ledger.push(Claim::at_most(format!("{tag}.relations.interior == 0"), 1e-12, interior_defect));
    let allowance = iota.diagonal_factor() * (delta_eff - delta_ref).max(0.0);
    if window_fits(n, delta_ref) {
        ledger.push(Claim::at_most(
            format!("{tag}.rD < sqrt(delta) + allowance"),
            delta_ref.sqrt() + allowance,
            errors.iter().copied().fold(0.0, f64::max),
        ));
    }
    let max_wrap = wrap.iter().copied().fold(0.0, f64::max);
    ledger.measure(format!("{tag}.wraparound"), max_wrap);
    ledger.measure(format!("{tag}.delta_eff"), delta_eff);
    ledger.measure(format!("{tag}.allowance"), allowance);

    Ok(DilationStep {
        m,
        input: u.clone(),
        theta: theta.clone(),
        window: iota,
        output,
        compressed,
        errors,
        input_defect,
        output_defect,
        delta_eff,
        wrap,
        interior_defect,
        preserved_deviation,
        warnings,
        ledger,
    })
}

/// Iterated dilation `U -> V_Θ` for `m = 1, ..., d-1`.
#[derive(Debug, Clone)]
pub struct FullDilation {
    pub input: UnitaryTuple,
    pub delta: f64,
    pub half_width: usize,
    pub steps: Vec<DilationStep>,
    /// `Σ_m e_m` over the steps.
    pub sum_errors: f64,
    /// `max_i ||U_i - ι_total* V_i ι_total||`.
    pub direct_error: f64,
    /// `Σ_m N(N+1)/(2N+1) max(0, δ_eff - δ)`.
    pub allowance: f64,
    pub final_defect: DefectMatrix,
    pub ledger: Ledger,
}

impl FullDilation {
    /// `V_Θ` in structured form (the input itself when `d = 1`).
    pub fn v_theta(&self) -> Option<&[WeightedShiftOperator]> {
        self.steps.last().map(|s| s.output.as_slice())
    }

    pub fn output_dim(&self) -> usize {
        self.steps
            .last()
            .map_or(self.input.dim(), |s| s.window.base_dim * s.window.ring_size)
    }

    pub fn certificate(&self) -> DilationCertificate {
        DilationCertificate {
            input: TupleShape {
                d: self.input.d(),
                dim: self.input.dim(),
            },
            output: TupleShape {
                d: self.input.d(),
                dim: self.output_dim(),
            },
            truncation: TruncationReport {
                mode: "cyclic",
                half_width: self.half_width,
                rings: self.steps.iter().map(DilationStep::ring).collect(),
            },
            delta: self.delta,
            defect_before: commutation_defect(&self.input, &self.steps_theta())
                .map(|m| m.values)
                .unwrap_or_default(),
            defect_after: self.final_defect.values.clone(),
            compression_errors: self.steps.iter().map(|s| s.errors.clone()).collect(),
            sum_errors: self.sum_errors,
            direct_error: self.direct_error,
            allowance: self.allowance,
            ledger: self.ledger.clone(),
        }
    }

    fn steps_theta(&self) -> PhaseMatrix {
        self.steps
            .first()
            .map(|s| s.theta.clone())
            .expect("certificate needs at least one step")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TupleShape {
    pub d: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TruncationReport {
    pub mode: &'static str,
    pub half_width: usize,
    pub rings: Vec<usize>,
}

/// Serializable summary of a [`FullDilation`].
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DilationCertificate {
    pub input: TupleShape,
    pub output: TupleShape,
    pub truncation: TruncationReport,
    pub delta: f64,
    pub defect_before: Vec<Vec<f64>>,
    pub defect_after: Vec<Vec<f64>>,
    pub compression_errors: Vec<Vec<f64>>,
    pub sum_errors: f64,
    pub direct_error: f64,
    pub allowance: f64,
    #[serde(flatten)]
    pub ledger: Ledger,
}

/// Runs the steps `m = 1, ..., d-1`, densifying each intermediate tuple.
pub fn dilate_full(u: &UnitaryTuple, theta: &PhaseMatrix, trunc: Truncation) -> Result<FullDilation> {
    let d = u.d();
    if d != theta.d() {
        return Err(Error::DimensionMismatch { tuple: d, phase: theta.d() });
    }
    if d < 2 {
        return Err(Error::InvalidArgument("dilation needs at least two generators".into()));
    }
    let delta = commutation_defect(u, theta)?.max();
    if delta >= 1.0 && trunc.window.is_none() {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let n = resolve_window(delta, trunc.window)?;

    let mut steps: Vec<DilationStep> = Vec::with_capacity(d - 1);
    let mut current = u.clone();
    for m in 1..d {
        let ring = trunc.ring.unwrap_or_else(|| default_ring(theta, m, n));
        let step = step_with(&current, theta, m, ring, n, delta)?;
        if m + 1 < d {
            current = step.output_dense()?;
        }
        steps.push(step);
    }

    // Compress all the way back down to compare V_Θ with U directly.
    let last = steps.last().expect("d >= 2");
    let mut back: Vec<ComplexMatrix> = last.compressed.clone();
    for step in steps.iter().rev().skip(1) {
        back = back
            .iter()
            .map(|a| compress_dense(a, &step.window))
            .collect::<Result<Vec<_>>>()?;
    }
    let direct_error = tuple_distance(u.matrices(), &back);
    let sum_errors: f64 = steps.iter().map(DilationStep::error).sum();
    let allowance: f64 = steps
        .iter()
        .map(|s| s.window.diagonal_factor() * (s.delta_eff - delta).max(0.0))
        .sum();
    let final_defect = last.output_defect.clone();
    let max_wrap = steps
        .iter()
        .flat_map(|s| s.wrap.iter().copied())
        .fold(0.0, f64::max);

    let mut ledger = Ledger::new();
    for step in &steps {
        ledger.extend(&step.ledger);
    }
    if window_fits(n, delta) {
        ledger.push(Claim::at_most(
            "full.sum_errors < (d-1)*sqrt(delta) + allowance",
            (d - 1) as f64 * delta.sqrt() + allowance,
            sum_errors,
        ));
    } else {
        let per_step: f64 = steps
            .iter()
            .map(|s| s.window.shift_term().max(s.window.diagonal_factor() * s.delta_eff))
            .sum();
        ledger.push(Claim::at_most(
            "full.sum_errors <= sum of per-step window bounds",
            per_step,
            sum_errors,
        ));
    }
    ledger.push(Claim::at_most(
        "full.direct_compression <= sum_errors",
        sum_errors,
        direct_error,
    ));
    ledger.push(Claim::at_most(
        "full.final_defect <= max step wraparound",
        max_wrap,
        final_defect.max(),
    ));
    ledger.measure("full.delta", delta);
    ledger.measure("full.final_defect", final_defect.max());
    ledger.measure("full.max_wraparound", max_wrap);

    Ok(FullDilation {
        input: u.clone(),
        delta,
        half_width: n,
        steps,
        sum_errors,
        direct_error,
        allowance,
        final_defect,
        ledger,
    })
}

/// Uniform grid of `g^d` gauge points `λ_i = e^{2πi t_i / g}`.
pub fn gauge_grid(d: usize, g: usize) -> Vec<Vec<C64>> {
    let total = g.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let t = idx % g;
                    idx /= g;
                    crate::numerics::cis_turns(t as f64 / g as f64)
                })
                .collect()
        })
        .collect()
}

/// `⊕_λ λ · weyl_tuple(Θ)` over the uniform `g`-grid; a finite stand-in for
/// the universal Θ-commuting tuple.
pub fn universal_surrogate(theta: &PhaseMatrix, g: usize) -> Result<UnitaryTuple> {
    if g == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let base = weyl_tuple(theta)?;
    let dim = base.dim() * g.pow(theta.d() as u32);
    if dim > DENSE_CAP {
        return Err(Error::SizeCap { dim, cap: DENSE_CAP });
    }
    let parts = gauge_grid(theta.d(), g)
        .iter()
        .map(|lambda| gauge_rotate(&base, lambda))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&UnitaryTuple> = parts.iter().collect();
    UnitaryTuple::direct_sum(&refs)
}

/// Level-1 gauge resolution `2 sin(π / g)` of a `g`-grid.
pub fn grid_resolution(g: usize) -> f64 {
    2.0 * (std::f64::consts::PI / g as f64).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c64, cis_turns};
    use crate::tuples::{clock, perturb_to_defect, random_almost_commuting_pair, shift};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_choices() {
        assert_eq!(choose_window(0.04).unwrap(), 3);
        assert_eq!(choose_window(0.25).unwrap(), 1);
        assert_eq!(choose_window(0.999).unwrap(), 1);
        assert!(choose_window(0.0).is_err());
        assert!(choose_window(1.0).is_err());
    }

    #[test]
    fn window_enumeration_oracle() {
        for &delta in &[0.5, 0.1, 0.04, 0.01, 0.003, 1e-4] {
            let x = 1.0 / f64::sqrt(delta);
            let oracle = (1..10_000)
                .find(|&n| (n as f64 + 1.0) / 2.0 < x - 1e-12 && x + 1e-12 < 2.0 * n as f64 + 1.0)
                .unwrap();
            assert_eq!(choose_window(delta).unwrap(), oracle, "delta={delta}");
        }
    }

    #[test]
    fn labels_cover_ring() {
        for ring in 4..12 {
            let mut labels: Vec<i64> = (0..ring).map(|r| ring_label(r, ring)).collect();
            for (r, &k) in labels.iter().enumerate() {
                assert_eq!(ring_slot(k, ring), r);
            }
            labels.sort();
            assert!(labels.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(ring_label(wrap_slot(ring), ring), *labels.last().unwrap());
        }
    }

    #[test]
    fn window_isometry_and_wrap_rejection() {
        let w = WindowIsometry::new(3, 12, 5).unwrap();
        assert!(w.dense().unwrap().isometry_drift() < 1e-12);
        assert!(matches!(
            WindowIsometry::new(3, 11, 5),
            Err(Error::RingTooSmall { needed: 12, .. })
        ));
    }

    #[test]
    fn weyl_pair_dilation_is_exact() {
        let (u, v) = (clock(8), shift(8));
        let q = cis_turns(1.0 / 8.0);
        let p = dilate_pair(&u, &v, q, 24, Some(5)).unwrap();
        assert!(p.output_defect <= 1e-12);
        assert!(p.compressed_u.max_abs_diff(&u.scale_re(10.0 / 11.0)) <= 1e-12);
        assert!((p.error_u - 1.0 / 11.0).abs() <= 1e-12);
    }

    #[test]
    fn commuting_pair_stays_commuting() {
        let u = ComplexMatrix::from_diag(&[cis_turns(0.1), cis_turns(0.7)]);
        let v = ComplexMatrix::from_diag(&[cis_turns(0.3), cis_turns(0.2)]);
        for ring in [4, 7, 10] {
            let p = dilate_pair(&u, &v, c64(1.0, 0.0), ring, None).unwrap();
            assert!(p.output_defect <= 1e-12);
            assert!(p.error_v <= 1e-12);
        }
    }

    #[test]
    fn generic_pair_wraparound() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (u, v, q) = random_almost_commuting_pair(4, 0.02, &mut rng).unwrap();
        let q2 = q * cis_turns(0.003);
        let p = dilate_pair(&u, &v, q2, 16, None).unwrap();
        assert!(p.interior_defect <= 1e-12);
        assert!((p.output_defect - p.wrap_defect).abs() <= 1e-12);
        // Telescoping oracle for the wrap term.
        let telescoped: f64 = (0..16)
            .map(|k| {
                let a = u.unitary_pow(k);
                let b = u.unitary_pow(k + 1);
                let wk = (&(&a * &v) * &a.adjoint()).scale(q2.powi(k as i32));
                let wk1 = (&(&b * &v) * &b.adjoint()).scale(q2.powi(k as i32 + 1));
                (&wk1 - &wk).operator_norm()
            })
            .sum();
        assert!(p.wrap_defect <= telescoped + 1e-12);
        assert!(p.wrap_defect <= 16.0 * p.delta + 1e-10);
        assert!(p.ledger.all_pass(), "{:?}", p.ledger.failures().collect::<Vec<_>>());
    }

    #[test]
    fn compress_diagonal_weights_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blocks: Vec<ComplexMatrix> = (0..10)
            .map(|_| crate::numerics::random::ginibre(2, 2, &mut rng))
            .collect();
        let a = WeightedShiftOperator::from_fn(10, 0, 2, |r| blocks[r].clone()).unwrap();
        let iota = WindowIsometry::new(2, 10, 3).unwrap();
        let mut avg = ComplexMatrix::zeros(2, 2);
        for k in -3i64..=3 {
            avg = &avg + &blocks[ring_slot(k, 10)];
        }
        avg = avg.scale_re(1.0 / 7.0);
        assert!(compress(&a, &iota).unwrap().max_abs_diff(&avg) < 1e-14);
        let dense = compress_dense(&a.densify().unwrap(), &iota).unwrap();
        assert!(dense.max_abs_diff(&avg) < 1e-14);
        let i = iota.dense().unwrap();
        let via = &(&i.adjoint() * &a.densify().unwrap()) * &i;
        assert!(via.max_abs_diff(&avg) < 1e-14);
    }

    #[test]
    fn step_reduces_to_pair_for_d2() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (u, v, q) = random_almost_commuting_pair(3, 0.05, &mut rng).unwrap();
        // U_1 U_0 = q[0][1] U_0 U_1 with (U_0, U_1) = (v, u) and q[1][0] = q.
        let turns = q.arg() / std::f64::consts::TAU;
        let theta = PhaseMatrix::float_pair(-turns).unwrap();
        let t = UnitaryTuple::new(vec![v.clone(), u.clone()]).unwrap();
        let step = dilate_step(&t, &theta, 1, Truncation { ring: Some(12), window: Some(3) }).unwrap();
        let pair = dilate_pair(&u, &v, theta.q(1, 0), 12, Some(3)).unwrap();
        assert!(step.output[1].sub(&pair.u_tilde).unwrap().norm() < 1e-14);
        assert!(step.output[0].sub(&pair.v_tilde).unwrap().norm() < 1e-12);
        assert!((step.errors[0] - pair.error_v).abs() < 1e-12);
    }

    #[test]
    fn exact_input_stays_exact() {
        let theta = PhaseMatrix::rational_upper(3, &[(1, 2), (1, 3), (1, 6)]).unwrap();
        let w = weyl_tuple(&theta).unwrap();
        let full = dilate_full(&w, &theta, Truncation { ring: None, window: Some(2) }).unwrap();
        assert!(full.final_defect.max() <= 1e-12);
        for step in &full.steps {
            assert!((step.errors[step.m] - 0.2).abs() < 1e-12);
            for j in (0..3).filter(|&j| j != step.m) {
                assert!(step.errors[j] < 1e-12);
            }
        }
        assert!(full.ledger.all_pass(), "{:?}", full.ledger.failures().collect::<Vec<_>>());
    }

    #[test]
    fn d3_perturbed_ledger_passes() {
        let theta = PhaseMatrix::rational_upper(3, &[(1, 2), (1, 2), (0, 1)]).unwrap();
        let base = weyl_tuple(&theta).unwrap();
        assert_eq!(base.dim(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = perturb_to_defect(&base, &theta, 0.01, &mut rng).unwrap();
        let full = dilate_full(&u, &theta, Truncation::default()).unwrap();
        assert!(full.sum_errors < 0.2);
        assert!(full.allowance < 1e-12);
        assert!(full.ledger.all_pass(), "{:?}", full.ledger.failures().collect::<Vec<_>>());
    }

    #[test]
    fn surrogate_shapes() {
        let theta = PhaseMatrix::rational_upper(2, &[(1, 3)]).unwrap();
        let s1 = universal_surrogate(&theta, 1).unwrap();
        assert_eq!(s1, weyl_tuple(&theta).unwrap());
        let s4 = universal_surrogate(&theta, 4).unwrap();
        assert_eq!(s4.dim(), 3 * 16);
        assert!(commutation_defect(&s4, &theta).unwrap().max() <= 1e-12);
        assert!((grid_resolution(4) - 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn shift_compression_identity(seed in any::<u64>(), m in 1usize..=16, n in 0usize..=20, extra in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = crate::numerics::random::haar_unitary(m, &mut rng);
            let ring = 2 * n + 2 + extra;
            let a = WeightedShiftOperator::constant(ring, 1, &u).unwrap();
            let iota = WindowIsometry::new(m, ring, n).unwrap();
            let c = compress(&a, &iota).unwrap();
            let expect = u.scale_re(2.0 * n as f64 / (2 * n + 1) as f64);
            prop_assert!(c.max_abs_diff(&expect) <= 1e-12);
        }

        #[test]
        fn telescoping_bound(seed in any::<u64>(), delta in 0.001f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v, q) = random_almost_commuting_pair(3, delta, &mut rng).unwrap();
            let measured = pair_defect(&u, &v, q);
            let orbit = conjugate_orbit(&u, &v, q, -6, 6);
            for (idx, w) in orbit.iter().enumerate() {
                let k = (idx as i64 - 6).abs() as f64;
                prop_assert!((&v - w).operator_norm() <= k * measured + 1e-10);
            }
        }

        #[test]
        fn step_preserves_untouched_defects(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = PhaseMatrix::rational_upper(3, &[(1, 3), (1, 4), (2, 5)]).unwrap();
            let u = crate::tuples::random_unitary_tuple(3, 3, &mut rng);
            for m in 0..3 {
                let step = dilate_step(&u, &theta, m, Truncation { ring: Some(8), window: Some(2) }).unwrap();
                prop_assert!(step.preserved_deviation <= 1e-10);
                prop_assert!(step.interior_defect <= 1e-12 * 10.0);
            }
        }
    }
}
