//! Phase data, unitary tuples, commutation defects, the gauge action and
//! corner identities.
//!
//! Indices are 0-based. A tuple `U` is Θ-commuting when
//! `U_l U_k = q[k][l] U_k U_l` with `q[k][l] = exp(i θ[k][l])`.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_rational::Rational64;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ledger::{Claim, Ledger};
use crate::numerics::{
    cis_turns, orthonormal_complement, random::haar_unitary, random::random_hermitian,
    unitary_exp, ComplexMatrix, C64,
};

/// Fractional part in `[0, 1)`.
pub fn frac(r: Rational64) -> Rational64 {
    r - Rational64::from_integer(r.floor().to_integer())
}

/// One phase `θ / 2π`, measured in turns.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseEntry {
    Rational(Rational64),
    /// `coef * α + offset`, where `α` is the irrational registered under `tag`.
    Irrational {
        tag: String,
        coef: i64,
        offset: Rational64,
    },
    /// Undeclared floating-point value.
    Float(f64),
}

impl PhaseEntry {
    pub fn rational(p: i64, q: i64) -> Self {
        PhaseEntry::Rational(Rational64::new(p, q))
    }

    pub fn irrational(tag: impl Into<String>) -> Self {
        PhaseEntry::Irrational {
            tag: tag.into(),
            coef: 1,
            offset: Rational64::from_integer(0),
        }
    }

    pub fn negate(&self) -> Self {
        match self {
            PhaseEntry::Rational(r) => PhaseEntry::Rational(-*r),
            PhaseEntry::Irrational { tag, coef, offset } => PhaseEntry::Irrational {
                tag: tag.clone(),
                coef: -coef,
                offset: -*offset,
            },
            PhaseEntry::Float(x) => PhaseEntry::Float(-x),
        }
    }

    /// Rational value mod 1, also for irrational entries with zero coefficient.
    pub fn as_rational(&self) -> Option<Rational64> {
        match self {
            PhaseEntry::Rational(r) => Some(frac(*r)),
            PhaseEntry::Irrational { coef: 0, offset, .. } => Some(frac(*offset)),
            _ => None,
        }
    }
}

/// Antisymmetric phase matrix `Θ / 2π` with exact rational and declared
/// irrational entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    d: usize,
    entries: Vec<PhaseEntry>,
    irrationals: BTreeMap<String, f64>,
}

fn sums_to_integer(a: &PhaseEntry, b: &PhaseEntry, irr: &BTreeMap<String, f64>) -> bool {
    if let (Some(x), Some(y)) = (a.as_rational(), b.as_rational()) {
        return frac(x + y) == Rational64::from_integer(0);
    }
    match (a, b) {
        (
            PhaseEntry::Irrational { tag: t1, coef: c1, offset: o1 },
            PhaseEntry::Irrational { tag: t2, coef: c2, offset: o2 },
        ) => t1 == t2 && c1 + c2 == 0 && frac(*o1 + *o2) == Rational64::from_integer(0),
        (PhaseEntry::Float(_), _) | (_, PhaseEntry::Float(_)) => {
            let s = entry_turns(a, irr) + entry_turns(b, irr);
            (s - s.round()).abs() <= 1e-12
        }
        _ => false,
    }
}

fn entry_turns(e: &PhaseEntry, irr: &BTreeMap<String, f64>) -> f64 {
    entry_turns_times(e, irr, 1)
}

fn entry_turns_times(e: &PhaseEntry, irr: &BTreeMap<String, f64>, n: i64) -> f64 {
    match e {
        PhaseEntry::Rational(r) => {
            let f = frac(*r * n);
            *f.numer() as f64 / *f.denom() as f64
        }
        PhaseEntry::Irrational { tag, coef, offset } => {
            let alpha = irr[tag];
            let o = frac(*offset * n);
            let base = (alpha * (*coef as f64) * n as f64).rem_euclid(1.0);
            (base + *o.numer() as f64 / *o.denom() as f64).rem_euclid(1.0)
        }
        PhaseEntry::Float(x) => (x * n as f64).rem_euclid(1.0),
    }
}

impl PhaseMatrix {
    /// Validates shape, zero diagonal and symbolic antisymmetry.
    pub fn new(d: usize, entries: Vec<PhaseEntry>, irrationals: BTreeMap<String, f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Phase("dimension must be positive".into()));
        }
        if entries.len() != d * d {
            return Err(Error::Phase(format!("expected {} entries, got {}", d * d, entries.len())));
        }
        for (tag, &a) in &irrationals {
            if !a.is_finite() {
                return Err(Error::Phase(format!("irrational {tag:?} has non-finite value")));
            }
        }
        for k in 0..d {
            for l in 0..d {
                let e = &entries[k * d + l];
                match e {
                    PhaseEntry::Irrational { tag, .. } if !irrationals.contains_key(tag) => {
                        return Err(Error::Phase(format!("entry ({k}, {l}): unknown irrational tag {tag:?}")))
                    }
                    PhaseEntry::Float(x) if !x.is_finite() => {
                        return Err(Error::Phase(format!("entry ({k}, {l}): non-finite value")))
                    }
                    _ => {}
                }
            }
        }
        for k in 0..d {
            let e = &entries[k * d + k];
            if !sums_to_integer(e, &PhaseEntry::rational(0, 1), &irrationals) {
                return Err(Error::Phase(format!("entry ({k}, {k}): diagonal must vanish")));
            }
            for l in (k + 1)..d {
                if !sums_to_integer(&entries[k * d + l], &entries[l * d + k], &irrationals) {
                    return Err(Error::Phase(format!(
                        "entry ({l}, {k}): not the negative of entry ({k}, {l})"
                    )));
                }
            }
        }
        Ok(Self { d, entries, irrationals })
    }

    /// Builds the antisymmetric matrix from its strict upper triangle.
    pub fn from_upper(
        d: usize,
        mut upper: impl FnMut(usize, usize) -> PhaseEntry,
        irrationals: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut entries = vec![PhaseEntry::rational(0, 1); d * d];
        for k in 0..d {
            for l in (k + 1)..d {
                let e = upper(k, l);
                entries[l * d + k] = e.negate();
                entries[k * d + l] = e;
            }
        }
        Self::new(d, entries, irrationals)
    }

    /// Rational phases `p/q` for the pairs `(0,1), (0,2), ..., (1,2), ...`.
    pub fn rational_upper(d: usize, upper: &[(i64, i64)]) -> Result<Self> {
        let pairs = d * d.saturating_sub(1) / 2;
        if upper.len() != pairs {
            return Err(Error::Phase(format!("expected {pairs} upper entries, got {}", upper.len())));
        }
        if let Some(i) = upper.iter().position(|&(_, q)| q == 0) {
            return Err(Error::Phase(format!("upper entry {i}: zero denominator")));
        }
        let mut it = upper.iter();
        Self::from_upper(
            d,
            |_, _| {
                let &(p, q) = it.next().expect("counted");
                PhaseEntry::rational(p, q)
            },
            BTreeMap::new(),
        )
    }

    /// `d = 2` matrix with `θ[0][1] / 2π` given by `entry`.
    pub fn pair(entry: PhaseEntry, irrationals: BTreeMap<String, f64>) -> Result<Self> {
        Self::from_upper(2, |_, _| entry.clone(), irrationals)
    }

    /// `d = 2` matrix with `θ[0][1] / 2π = α` for a declared irrational `α`.
    pub fn irrational_pair(tag: &str, approx: f64) -> Result<Self> {
        Self::pair(
            PhaseEntry::irrational(tag),
            BTreeMap::from([(tag.to_string(), approx)]),
        )
    }

    /// `d = 2` matrix from an undeclared float `θ[0][1] / 2π`.
    pub fn float_pair(turns: f64) -> Result<Self> {
        Self::pair(PhaseEntry::Float(turns), BTreeMap::new())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entry(&self, k: usize, l: usize) -> &PhaseEntry {
        &self.entries[k * self.d + l]
    }

    pub fn irrationals(&self) -> &BTreeMap<String, f64> {
        &self.irrationals
    }

    /// `θ[k][l] / 2π` reduced to `[0, 1)`.
    pub fn turns(&self, k: usize, l: usize) -> f64 {
        entry_turns(self.entry(k, l), &self.irrationals)
    }

    /// `n θ[k][l] / 2π` reduced to `[0, 1)`, exact for rational entries.
    pub fn turns_times(&self, k: usize, l: usize, n: i64) -> f64 {
        entry_turns_times(self.entry(k, l), &self.irrationals, n)
    }

    pub fn theta(&self, k: usize, l: usize) -> f64 {
        std::f64::consts::TAU * self.turns(k, l)
    }

    pub fn q(&self, k: usize, l: usize) -> C64 {
        cis_turns(self.turns(k, l))
    }

    /// `q[k][l]^n`, computed from the reduced phase.
    pub fn q_pow(&self, k: usize, l: usize, n: i64) -> C64 {
        cis_turns(self.turns_times(k, l, n))
    }

    pub fn q_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.d, self.d, |k, l| self.q(k, l))
    }

    pub fn rational(&self, k: usize, l: usize) -> Option<Rational64> {
        self.entry(k, l).as_rational()
    }

    pub fn is_rational(&self) -> bool {
        self.entries.iter().all(|e| e.as_rational().is_some())
    }

    /// Least common multiple of all denominators, when every entry is rational.
    pub fn common_denominator(&self) -> Option<i64> {
        self.entries
            .iter()
            .try_fold(1i64, |acc, e| e.as_rational().map(|r| acc.lcm(r.denom())))
    }

    /// Projection onto the generators in `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.d) {
            return Err(Error::IndexOutOfRange { index: bad, d: self.d });
        }
        let n = idx.len();
        let entries = (0..n * n)
            .map(|t| self.entry(idx[t / n], idx[t % n]).clone())
            .collect();
        Self::new(n, entries, self.irrationals.clone())
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::Phase("expected a JSON object".into()))?;
        let d = obj
            .get("d")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Phase("missing positive integer field \"d\"".into()))? as usize;
        let mut irrationals: BTreeMap<String, f64> = BTreeMap::new();
        let mut parse = |k: usize, l: usize, e: &Value| -> Result<PhaseEntry> {
            parse_entry(e, &mut irrationals).map_err(|msg| Error::Phase(format!("entry ({k}, {l}): {msg}")))
        };
        let entries = if let Some(rows) = obj.get("entries") {
            let rows = rows
                .as_array()
                .filter(|r| r.len() == d)
                .ok_or_else(|| Error::Phase(format!("\"entries\" must be a {d}x{d} array")))?;
            let mut out = Vec::with_capacity(d * d);
            for (k, row) in rows.iter().enumerate() {
                let row = row
                    .as_array()
                    .filter(|r| r.len() == d)
                    .ok_or_else(|| Error::Phase(format!("row {k} must have {d} entries")))?;
                for (l, e) in row.iter().enumerate() {
                    out.push(parse(k, l, e)?);
                }
            }
            out
        } else if let Some(upper) = obj.get("upper") {
            let upper = upper
                .as_array()
                .ok_or_else(|| Error::Phase("\"upper\" must be an array".into()))?;
            if upper.len() != d * d.saturating_sub(1) / 2 {
                return Err(Error::Phase(format!(
                    "\"upper\" needs {} entries for d = {d}",
                    d * d.saturating_sub(1) / 2
                )));
            }
            let mut out = vec![PhaseEntry::rational(0, 1); d * d];
            let mut it = upper.iter();
            for k in 0..d {
                for l in (k + 1)..d {
                    let e = parse(k, l, it.next().expect("counted"))?;
                    out[l * d + k] = e.negate();
                    out[k * d + l] = e;
                }
            }
            out
        } else {
            return Err(Error::Phase("missing \"entries\"".into()));
        };
        Self::new(d, entries, irrationals)
    }

    pub fn to_json_value(&self) -> Value {
        let rows: Vec<Value> = (0..self.d)
            .map(|k| {
                Value::Array(
                    (0..self.d)
                        .map(|l| match self.entry(k, l) {
                            PhaseEntry::Rational(r) => json!({"rational": [r.numer(), r.denom()]}),
                            PhaseEntry::Irrational { tag, coef, offset } => {
                                let mut o = json!({"tag": tag, "approx": self.irrationals[tag]});
                                if *coef != 1 {
                                    o["coef"] = json!(coef);
                                }
                                if *offset != Rational64::from_integer(0) {
                                    o["offset"] = json!([offset.numer(), offset.denom()]);
                                }
                                json!({ "irrational": o })
                            }
                            PhaseEntry::Float(x) => json!({ "float": x }),
                        })
                        .collect(),
                )
            })
            .collect();
        json!({"d": self.d, "entries": rows})
    }
}

fn parse_ratio(v: &Value) -> std::result::Result<Rational64, String> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or("expected [p, q]")?;
    let p = pair[0].as_i64().ok_or("numerator must be an integer")?;
    let q = pair[1].as_i64().ok_or("denominator must be an integer")?;
    if q == 0 {
        return Err("zero denominator".into());
    }
    Ok(Rational64::new(p, q))
}

fn parse_entry(v: &Value, irr: &mut BTreeMap<String, f64>) -> std::result::Result<PhaseEntry, String> {
    let obj = v
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or("expected an object with one of \"rational\", \"irrational\", \"float\"")?;
    let (kind, body) = obj.iter().next().expect("one key");
    match kind.as_str() {
        "rational" => parse_ratio(body).map(PhaseEntry::Rational),
        "irrational" => {
            let tag = body
                .get("tag")
                .and_then(Value::as_str)
                .ok_or("irrational entry needs a string \"tag\"")?;
            let approx = body
                .get("approx")
                .and_then(Value::as_f64)
                .filter(|x| x.is_finite())
                .ok_or("irrational entry needs a finite \"approx\"")?;
            match irr.get(tag) {
                Some(&a) if a != approx => {
                    return Err(format!("tag {tag:?} declared with two different approximations"))
                }
                _ => {
                    irr.insert(tag.to_string(), approx);
                }
            }
            let coef = match body.get("coef") {
                None => 1,
                Some(c) => c.as_i64().ok_or("\"coef\" must be an integer")?,
            };
            let offset = match body.get("offset") {
                None => Rational64::from_integer(0),
                Some(o) => parse_ratio(o)?,
            };
            Ok(PhaseEntry::Irrational {
                tag: tag.to_string(),
                coef,
                offset,
            })
        }
        "float" => body
            .as_f64()
            .filter(|x| x.is_finite())
            .map(PhaseEntry::Float)
            .ok_or_else(|| "float entry must be a finite number".to_string()),
        other => Err(format!("unknown entry kind {other:?}")),
    }
}

impl Serialize for PhaseMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhaseMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Self::from_json_value(&v).map_err(D::Error::custom)
    }
}

pub const DEFAULT_UNITARITY_TOL: f64 = 1e-10;
/// Drift above which inputs are rejected instead of re-unitarized.
pub const REUNITARIZE_LIMIT: f64 = 1e-6;

/// `d` unitaries of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryTuple {
    matrices: Vec<ComplexMatrix>,
    tol: f64,
}

impl UnitaryTuple {
    pub fn new(matrices: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_tol(matrices, DEFAULT_UNITARITY_TOL)
    }

    /// Accepts drift up to `tol`, polar-corrects drift up to
    /// [`REUNITARIZE_LIMIT`], rejects anything larger.
    pub fn with_tol(matrices: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument("tuple must contain at least one matrix".into()));
        }
        let dim = matrices[0].rows();
        let mut out = Vec::with_capacity(matrices.len());
        for (index, m) in matrices.into_iter().enumerate() {
            if m.shape() != (dim, dim) {
                return Err(Error::Shape(format!(
                    "matrix {index} is {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            let drift = m.unitarity_drift();
            if drift <= tol {
                out.push(m);
            } else if drift <= REUNITARIZE_LIMIT.max(tol) {
                out.push(m.polar_unitary()?);
            } else {
                return Err(Error::NotUnitary { index, drift });
            }
        }
        Ok(Self { matrices: out, tol })
    }

    pub fn d(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn unitarity_tol(&self) -> f64 {
        self.tol
    }

    pub fn get(&self, i: usize) -> &ComplexMatrix {
        &self.matrices[i]
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<ComplexMatrix> {
        self.matrices
    }

    pub fn direct_sum(parts: &[&UnitaryTuple]) -> Result<Self> {
        let d = parts.first().map(|p| p.d()).unwrap_or(0);
        if parts.iter().any(|p| p.d() != d) {
            return Err(Error::Shape("direct sum of tuples with different lengths".into()));
        }
        let matrices = (0..d)
            .map(|i| {
                let blocks: Vec<&ComplexMatrix> = parts.iter().map(|p| p.get(i)).collect();
                ComplexMatrix::direct_sum(&blocks)
            })
            .collect();
        Self::new(matrices)
    }

    /// Conjugation `W U_i W*` by a common unitary.
    pub fn conjugate(&self, w: &ComplexMatrix) -> Result<Self> {
        let wa = w.adjoint();
        Self::with_tol(
            self.matrices.iter().map(|m| &(w * m) * &wa).collect(),
            self.tol,
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TupleRepr {
    d: usize,
    dim: usize,
    matrices: Vec<ComplexMatrix>,
    #[serde(default = "default_tol")]
    unitarity_tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_UNITARITY_TOL
}

impl Serialize for UnitaryTuple {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TupleRepr {
            d: self.d(),
            dim: self.dim(),
            matrices: self.matrices.clone(),
            unitarity_tol: self.tol,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitaryTuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TupleRepr::deserialize(d)?;
        if r.matrices.len() != r.d {
            return Err(D::Error::custom(format!("\"d\" = {} but {} matrices", r.d, r.matrices.len())));
        }
        if r.matrices.iter().any(|m| m.shape() != (r.dim, r.dim)) {
            return Err(D::Error::custom(format!("every matrix must be {0}x{0}", r.dim)));
        }
        Self::with_tol(r.matrices, r.unitarity_tol).map_err(D::Error::custom)
    }
}

/// `max_i ||A_i - B_i||`.
pub fn tuple_distance(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> f64 {
    assert_eq!(a.len(), b.len(), "tuples of different length");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).operator_norm())
        .fold(0.0, f64::max)
}

/// `||v u - q u v||`.
pub fn pair_defect(u: &ComplexMatrix, v: &ComplexMatrix, q: C64) -> f64 {
    (&(v * u) - &(u * v).scale(q)).operator_norm()
}

/// Symmetric matrix of pairwise commutation defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectMatrix {
    pub d: usize,
    pub values: Vec<Vec<f64>>,
}

impl DefectMatrix {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k][l]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Largest defect among pairs involving generator `m`.
    pub fn max_involving(&self, m: usize) -> f64 {
        (0..self.d).map(|j| self.values[m][j]).fold(0.0, f64::max)
    }

    /// Largest defect among pairs avoiding generator `m`.
    pub fn max_avoiding(&self, m: usize) -> f64 {
        let mut best: f64 = 0.0;
        for k in (0..self.d).filter(|&k| k != m) {
            for l in (0..self.d).filter(|&l| l != m) {
                best = best.max(self.values[k][l]);
            }
        }
        best
    }
}

/// Entry `(k, l)` is `||U_l U_k - q[k][l] U_k U_l||`.
pub fn commutation_defect(u: &UnitaryTuple, theta: &PhaseMatrix) -> Result<DefectMatrix> {
    defect_of_matrices(u.matrices(), theta)
}

pub(crate) fn defect_of_matrices(u: &[ComplexMatrix], theta: &PhaseMatrix) -> Result<DefectMatrix> {
    let d = u.len();
    if d != theta.d() {
        return Err(Error::DimensionMismatch { tuple: d, phase: theta.d() });
    }
    let mut values = vec![vec![0.0; d]; d];
    for k in 0..d {
        for l in 0..d {
            if k != l {
                values[k][l] = pair_defect(&u[k], &u[l], theta.q(k, l));
            }
        }
    }
    Ok(DefectMatrix { d, values })
}

/// Clock `diag(1, ω, ..., ω^{n-1})` with `ω = e^{2πi/n}`.
pub fn clock(n: usize) -> ComplexMatrix {
    clock_pow(n, 1)
}

pub fn clock_pow(n: usize, power: i64) -> ComplexMatrix {
    let diag: Vec<C64> = (0..n as i64)
        .map(|t| cis_turns((t * power).rem_euclid(n as i64) as f64 / n as f64))
        .collect();
    ComplexMatrix::from_diag(&diag)
}

/// Cyclic shift `e_t -> e_{t+1 mod n}`.
pub fn shift(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |r, c| {
        if r == (c + 1) % n {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Exactly Θ-commuting tuple built from one clock/shift factor per pair.
///
/// For `θ[k][l] / 2π = a/n` the factor carries `C_n^{-a}` in slot `k` and
/// `S_n` in slot `l`; pairs with `n = 1` contribute nothing.
pub fn weyl_tuple(theta: &PhaseMatrix) -> Result<UnitaryTuple> {
    let d = theta.d();
    let mut mats: Vec<ComplexMatrix> = vec![ComplexMatrix::identity(1); d];
    for k in 0..d {
        for l in (k + 1)..d {
            let r = theta
                .rational(k, l)
                .ok_or(Error::IrrationalPhase { row: k, col: l })?;
            let n = *r.denom();
            if n == 1 {
                continue;
            }
            let nu = n as usize;
            let a = *r.numer();
            for (i, m) in mats.iter_mut().enumerate() {
                let factor = if i == k {
                    clock_pow(nu, -a)
                } else if i == l {
                    shift(nu)
                } else {
                    ComplexMatrix::identity(nu)
                };
                *m = m.kron(&factor);
            }
        }
    }
    UnitaryTuple::new(mats)
}

/// `(λ_1 U_1, ..., λ_d U_d)`.
pub fn gauge_rotate(u: &UnitaryTuple, lambda: &[C64]) -> Result<UnitaryTuple> {
    if lambda.len() != u.d() {
        return Err(Error::DimensionMismatch { tuple: u.d(), phase: lambda.len() });
    }
    if let Some(z) = lambda.iter().find(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::NotUnimodular { value: format!("{z}") });
    }
    UnitaryTuple::with_tol(
        u.matrices().iter().zip(lambda).map(|(m, &z)| m.scale(z)).collect(),
        u.unitarity_tol(),
    )
}

/// Blocks of one unitary `W = [[v', x], [y, z]]` relative to `K = ι H ⊕ (ι H)^⊥`.
#[derive(Debug, Clone)]
pub struct CornerBlocks {
    pub principal: ComplexMatrix,
    pub x: Option<ComplexMatrix>,
    pub y: Option<ComplexMatrix>,
    pub z: Option<ComplexMatrix>,
    /// `||y* y - (1 - v'* v')||`.
    pub identity_residual: f64,
    pub x_norm: f64,
    pub y_norm: f64,
}

impl CornerBlocks {
    /// `P [[v', x], [y, z]] P*` for the basis `P = [ι, ι^⊥]`.
    pub fn reassemble(&self, basis: &ComplexMatrix) -> ComplexMatrix {
        let h = self.principal.rows();
        let mut b = ComplexMatrix::zeros(basis.rows(), basis.rows());
        b.set_block(0, 0, &self.principal);
        if let (Some(x), Some(y), Some(z)) = (&self.x, &self.y, &self.z) {
            b.set_block(0, h, x);
            b.set_block(h, 0, y);
            b.set_block(h, h, z);
        }
        &(basis * &b) * &basis.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct CornerExtraction {
    /// Unitary `[ι, ι^⊥]`.
    pub basis: ComplexMatrix,
    pub blocks: Vec<CornerBlocks>,
}

pub fn corner_extract(w: &UnitaryTuple, iota: &ComplexMatrix) -> Result<CornerExtraction> {
    if iota.rows() != w.dim() {
        return Err(Error::Shape(format!(
            "isometry maps into dimension {}, tuple acts on {}",
            iota.rows(),
            w.dim()
        )));
    }
    let drift = iota.isometry_drift();
    if drift > 1e-12 {
        return Err(Error::NotIsometry { drift });
    }
    let comp = orthonormal_complement(iota);
    let basis = match &comp {
        Some(c) => {
            let mut cols: Vec<Vec<C64>> = (0..iota.cols()).map(|j| iota.column(j)).collect();
            cols.extend((0..c.cols()).map(|j| c.column(j)));
            ComplexMatrix::from_columns(&cols)
        }
        None => iota.clone(),
    };
    let ia = iota.adjoint();
    let h = iota.cols();
    let blocks = w
        .matrices()
        .iter()
        .map(|m| {
            let principal = &(&ia * m) * iota;
            let defect = &ComplexMatrix::identity(h) - &(&principal.adjoint() * &principal);
            let (x, y, z) = match &comp {
                Some(c) => {
                    let ca = c.adjoint();
                    (
                        Some(&(&ia * m) * c),
                        Some(&(&ca * m) * iota),
                        Some(&(&ca * m) * c),
                    )
                }
                None => (None, None, None),
            };
            let identity_residual = match &y {
                Some(y) => (&(&y.adjoint() * y) - &defect).operator_norm(),
                None => defect.operator_norm(),
            };
            let x_norm = x.as_ref().map_or(0.0, ComplexMatrix::operator_norm);
            let y_norm = y.as_ref().map_or(0.0, ComplexMatrix::operator_norm);
            CornerBlocks {
                principal,
                x,
                y,
                z,
                identity_residual,
                x_norm,
                y_norm,
            }
        })
        .collect();
    Ok(CornerExtraction { basis, blocks })
}

#[derive(Debug, Clone)]
pub struct CornerBoundReport {
    /// Description of a violated precondition, if any.
    pub precondition: Option<String>,
    /// `||1 - v'* v'||^{1/2}`.
    pub y_norm: f64,
    /// `||E||` for `E = [[v' - v, x], [y, 0]]` when blocks were supplied.
    pub e_norm: Option<f64>,
    pub ledger: Ledger,
}

/// Checks `||y|| <= sqrt(2δ)` and, given blocks, `||E|| <= sqrt(2δ) + δ`.
pub fn corner_defect_bound_check(
    v: &ComplexMatrix,
    v_prime: &ComplexMatrix,
    delta: f64,
    blocks: Option<&CornerBlocks>,
) -> CornerBoundReport {
    let mut issues = Vec::new();
    if v.shape() != v_prime.shape() || !v.is_square() {
        return CornerBoundReport {
            precondition: Some("v and v' must be square of equal size".into()),
            y_norm: f64::NAN,
            e_norm: None,
            ledger: Ledger::new(),
        };
    }
    let drift = v.unitarity_drift();
    if drift > DEFAULT_UNITARITY_TOL {
        issues.push(format!("v is not unitary (drift {drift:.3e})"));
    }
    let gap = (v - v_prime).operator_norm();
    if gap > delta + 1e-12 {
        issues.push(format!("||v - v'|| = {gap:.6e} exceeds delta = {delta:.6e}"));
    }
    let n = v.rows();
    let defect = &ComplexMatrix::identity(n) - &(&v_prime.adjoint() * v_prime);
    let y_norm = defect.operator_norm().sqrt();
    let root = (2.0 * delta).sqrt();
    let mut ledger = Ledger::new();
    ledger.push(Claim::with_slack("corner.y <= sqrt(2*delta)", root, y_norm, 1e-10));
    let e_norm = blocks.map(|b| {
        let diff = v_prime - v;
        let e = match (&b.x, &b.y) {
            (Some(x), Some(y)) => {
                let size = n + y.rows();
                let mut e = ComplexMatrix::zeros(size, size);
                e.set_block(0, 0, &diff);
                e.set_block(0, n, x);
                e.set_block(n, 0, y);
                e
            }
            _ => diff,
        };
        e.operator_norm()
    });
    if let Some(en) = e_norm {
        ledger.push(Claim::with_slack("corner.E <= sqrt(2*delta) + delta", root + delta, en, 1e-10));
    }
    CornerBoundReport {
        precondition: (!issues.is_empty()).then(|| issues.join("; ")),
        y_norm,
        e_norm,
        ledger,
    }
}

/// Haar-random tuple.
pub fn random_unitary_tuple<R: Rng + ?Sized>(d: usize, dim: usize, rng: &mut R) -> UnitaryTuple {
    UnitaryTuple::new((0..d).map(|_| haar_unitary(dim, rng)).collect()).expect("Haar samples are unitary")
}

/// Random Hermitian directions with unit operator norm, one per generator.
pub fn random_directions<R: Rng + ?Sized>(d: usize, dim: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    (0..d)
        .map(|_| {
            let h = random_hermitian(dim, rng);
            let n = h.operator_norm();
            h.scale_re(1.0 / n.max(1e-300))
        })
        .collect()
}

/// `U_j = e^{i ε H_j} V_j e^{-i ε H_j}`: a spectrum-preserving perturbation.
pub fn conjugation_perturb(base: &UnitaryTuple, directions: &[ComplexMatrix], eps: f64) -> UnitaryTuple {
    let mats = base
        .matrices()
        .iter()
        .zip(directions)
        .map(|(v, h)| {
            let w = unitary_exp(h, eps);
            &(&w * v) * &w.adjoint()
        })
        .collect();
    UnitaryTuple::new(mats).expect("conjugates of unitaries are unitary")
}

/// Conjugation-perturbed copy of `base` whose largest defect against
/// `theta` is within 0.1% of `target`.
pub fn perturb_to_defect<R: Rng + ?Sized>(
    base: &UnitaryTuple,
    theta: &PhaseMatrix,
    target: f64,
    rng: &mut R,
) -> Result<UnitaryTuple> {
    let base_defect = commutation_defect(base, theta)?.max();
    if target <= base_defect {
        return Err(Error::InvalidArgument(format!(
            "target defect {target} not above the base defect {base_defect}"
        )));
    }
    let dirs = random_directions(base.d(), base.dim(), rng);
    let defect = |eps: f64| -> f64 {
        let t = conjugation_perturb(base, &dirs, eps);
        commutation_defect(&t, theta).map(|m| m.max()).unwrap_or(f64::INFINITY)
    };
    let (mut lo, mut hi) = (0.0, target);
    let mut guard = 0;
    while defect(hi) < target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::InvalidArgument("perturbation cannot reach target defect".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let f = defect(mid);
        if (f - target).abs() <= 1e-3 * target {
            return Ok(conjugation_perturb(base, &dirs, mid));
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(conjugation_perturb(base, &dirs, 0.5 * (lo + hi)))
}

/// Random pair `(u, v)` of dimension `m` with `||v u - q u v|| ≈ delta`.
///
/// Starts from a randomly conjugated clock/shift pair with `q = e^{2πi a/m}`.
pub fn random_almost_commuting_pair<R: Rng + ?Sized>(
    m: usize,
    delta: f64,
    rng: &mut R,
) -> Result<(ComplexMatrix, ComplexMatrix, C64)> {
    if m < 2 {
        return Err(Error::InvalidArgument("pair dimension must be at least 2".into()));
    }
    let a = loop {
        let a = rng.random_range(1..m as i64);
        if a.gcd(&(m as i64)) == 1 {
            break a;
        }
    };
    let theta = PhaseMatrix::rational_upper(2, &[(a, m as i64)])?;
    let w = haar_unitary(m, rng);
    let base = weyl_tuple(&theta)?.conjugate(&w)?;
    let t = perturb_to_defect(&base, &theta, delta, rng)?;
    let q = theta.q(0, 1);
    let mut mats = t.into_matrices();
    let v = mats.pop().expect("two");
    let u = mats.pop().expect("two");
    Ok((u, v, q))
}
