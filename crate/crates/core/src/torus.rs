//! Subgroups of `T^d` generated by the columns of `Q`, their density, and the
//! ε–δ planner.
//!
//! Points are stored in turns (`θ / 2π` in `[0, 1)`). Distances are
//! `max_i |λ_i - μ_i|`, which in turns is `2 sin(π r)` with `r` the largest
//! circular coordinate gap.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::f64::consts::PI;

use num_integer::Integer;
use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tuples::{frac, PhaseEntry, PhaseMatrix};

/// Upper limit on stored cloud points.
pub const POINT_CAP: usize = 4_000_000;
/// Snap resolution for clouds built from non-rational phases.
pub const FLOAT_RESOLUTION: f64 = 1e-9;
/// Smallest quadtree cell side used when certifying density.
pub const MIN_CELL: f64 = 1.0 / 16_384.0;
/// Upper limit on quadtree cells visited per certification.
pub const CELL_CAP: usize = 8_000_000;
/// Largest grid evaluated by [`hausdorff_to_torus`] or the exact `η_Q` search.
pub const GRID_CAP: usize = 16_000_000;

/// Chordal distance `2 sin(π r)` for a circular gap of `r` turns.
pub fn chord(r: f64) -> f64 {
    2.0 * (PI * r.clamp(0.0, 0.5)).sin()
}

/// Circular gap `min(|a - b| mod 1, 1 - ...)` in turns.
pub fn circ(a: f64, b: f64) -> f64 {
    let t = (a - b).rem_euclid(1.0);
    t.min(1.0 - t)
}

/// `S_Q(N)`: products of at most `N` columns of `Q` and their inverses.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TorusCloud {
    pub d: usize,
    pub word_length: usize,
    /// Points in turns, sorted.
    pub points: Vec<Vec<f64>>,
    /// 0 for exact rational clouds, [`FLOAT_RESOLUTION`] otherwise.
    pub resolution: f64,
    #[serde(skip)]
    exact: Option<BTreeSet<Vec<Rational64>>>,
}

impl TorusCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Exact membership of a rational point; `None` for float clouds.
    pub fn contains_exact(&self, p: &[Rational64]) -> Option<bool> {
        let key: Vec<Rational64> = p.iter().map(|&x| frac(x)).collect();
        self.exact.as_ref().map(|s| s.contains(&key))
    }
}

/// Columns `g_ℓ = (θ[k][ℓ] / 2π)_k`; rational when every entry is.
fn rational_columns(q: &PhaseMatrix) -> Option<Vec<Vec<Rational64>>> {
    let d = q.d();
    (0..d)
        .map(|l| (0..d).map(|k| q.rational(k, l)).collect::<Option<Vec<_>>>())
        .collect()
}

/// Exponent vectors `n ∈ Z^d` with `Σ |n_ℓ| <= budget`.
fn for_each_exponent(d: usize, budget: usize, f: &mut impl FnMut(&[i64]) -> Result<()>) -> Result<()> {
    fn rec(
        pos: usize,
        left: usize,
        cur: &mut Vec<i64>,
        f: &mut impl FnMut(&[i64]) -> Result<()>,
    ) -> Result<()> {
        if pos == cur.len() {
            return f(cur);
        }
        for a in 0..=left as i64 {
            let signs: &[i64] = if a == 0 { &[1] } else { &[1, -1] };
            for &s in signs {
                cur[pos] = s * a;
                rec(pos + 1, left - a as usize, cur, f)?;
            }
        }
        Ok(())
    }
    let mut cur = vec![0i64; d];
    rec(0, budget, &mut cur, f)
}

pub fn subgroup_ball(q: &PhaseMatrix, n: usize) -> Result<TorusCloud> {
    let d = q.d();
    if let Some(cols) = rational_columns(q) {
        let mut set: BTreeSet<Vec<Rational64>> = BTreeSet::new();
        for_each_exponent(d, n, &mut |e| {
            let p: Vec<Rational64> = (0..d)
                .map(|k| frac((0..d).map(|l| cols[l][k] * e[l]).sum()))
                .collect();
            set.insert(p);
            if set.len() > POINT_CAP {
                return Err(Error::EnumerationCap(format!("more than {POINT_CAP} points at N = {n}")));
            }
            Ok(())
        })?;
        let points = set.iter().map(|p| p.iter().map(rat_f64).collect()).collect();
        return Ok(TorusCloud {
            d,
            word_length: n,
            points,
            resolution: 0.0,
            exact: Some(set),
        });
    }
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut points = Vec::new();
    let ticks = (1.0 / FLOAT_RESOLUTION).round() as i64;
    for_each_exponent(d, n, &mut |e| {
        let p: Vec<f64> = (0..d)
            .map(|k| {
                (0..d)
                    .map(|l| q.turns_times(k, l, e[l]))
                    .sum::<f64>()
                    .rem_euclid(1.0)
            })
            .collect();
        let key: Vec<i64> = p
            .iter()
            .map(|x| ((x / FLOAT_RESOLUTION).round() as i64).rem_euclid(ticks))
            .collect();
        if seen.insert(key) {
            points.push(p);
            if points.len() > POINT_CAP {
                return Err(Error::EnumerationCap(format!("more than {POINT_CAP} points at N = {n}")));
            }
        }
        Ok(())
    })?;
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(TorusCloud {
        d,
        word_length: n,
        points,
        resolution: FLOAT_RESOLUTION,
        exact: None,
    })
}

fn rat_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Bucket grid for nearest-point queries in the circular ℓ∞ metric, d <= 3.
struct PointIndex {
    d: usize,
    b: usize,
    starts: Vec<u32>,
    coords: Vec<[f64; 3]>,
}

impl PointIndex {
    fn new(d: usize, points: &[Vec<f64>]) -> Self {
        assert!((1..=3).contains(&d), "point index supports d <= 3");
        let target = (points.len() as f64 / 2.0).powf(1.0 / d as f64).round() as usize;
        let b = target.clamp(1, 2048);
        let nb = b.pow(d as u32);
        let mut keyed: Vec<(usize, [f64; 3])> = points
            .iter()
            .map(|p| {
                let mut c = [0.0; 3];
                c[..d].copy_from_slice(p);
                (Self::flat(b, d, &Self::cell(b, d, &c)), c)
            })
            .collect();
        keyed.sort_by_key(|&(k, _)| k);
        let mut starts = vec![0u32; nb + 1];
        for &(k, _) in &keyed {
            starts[k + 1] += 1;
        }
        for i in 0..nb {
            starts[i + 1] += starts[i];
        }
        let coords = keyed.into_iter().map(|(_, c)| c).collect();
        Self { d, b, starts, coords }
    }

    fn cell(b: usize, d: usize, p: &[f64; 3]) -> [usize; 3] {
        let mut c = [0; 3];
        for i in 0..d {
            c[i] = ((p[i].rem_euclid(1.0) * b as f64) as usize).min(b - 1);
        }
        c
    }

    fn flat(b: usize, d: usize, c: &[usize; 3]) -> usize {
        c[..d].iter().fold(0, |acc, &x| acc * b + x)
    }

    fn scan(&self, bucket: usize, p: &[f64; 3], best: &mut f64) {
        let (lo, hi) = (self.starts[bucket] as usize, self.starts[bucket + 1] as usize);
        for q in &self.coords[lo..hi] {
            let mut m: f64 = 0.0;
            for i in 0..self.d {
                m = m.max(circ(p[i], q[i]));
            }
            if m < *best {
                *best = m;
            }
        }
    }

    /// Stored points within circular ℓ∞ distance `radius` of `p`.
    fn within(&self, p: &[f64; 3], radius: f64) -> Vec<[f64; 3]> {
        let (d, b) = (self.d, self.b as i64);
        let reach = (radius * b as f64).ceil() as i64 + 1;
        let keep = |q: &[f64; 3]| (0..d).all(|i| circ(p[i], q[i]) <= radius);
        if 2 * reach + 1 > b {
            return self.coords.iter().filter(|q| keep(q)).copied().collect();
        }
        let home = Self::cell(self.b, d, p);
        let span = |i: usize| if i < d { -reach..=reach } else { 0..=0 };
        let mut out = Vec::new();
        for o0 in span(0) {
            for o1 in span(1) {
                for o2 in span(2) {
                    let offs = [o0, o1, o2];
                    let mut c = [0usize; 3];
                    for i in 0..d {
                        c[i] = (home[i] as i64 + offs[i]).rem_euclid(b) as usize;
                    }
                    let bucket = Self::flat(self.b, d, &c);
                    let (lo, hi) = (self.starts[bucket] as usize, self.starts[bucket + 1] as usize);
                    out.extend(self.coords[lo..hi].iter().filter(|q| keep(q)));
                }
            }
        }
        out
    }

    /// Smallest circular ℓ∞ gap (turns) from `p` to the stored points.
    fn nearest(&self, p: &[f64]) -> f64 {
        let (d, b) = (self.d, self.b as i64);
        let mut pp = [0.0; 3];
        pp[..d].copy_from_slice(p);
        let home = Self::cell(self.b, d, &pp);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            // Unvisited points lie at least (ring - 1) / b away.
            if best <= ((ring - 1).max(0)) as f64 / b as f64 {
                return best;
            }
            if 2 * ring + 1 > b {
                for bucket in 0..self.starts.len() - 1 {
                    self.scan(bucket, &pp, &mut best);
                }
                return best;
            }
            let span = |i: usize| if i < d { -ring..=ring } else { 0..=0 };
            for o0 in span(0) {
                for o1 in span(1) {
                    for o2 in span(2) {
                        if o0.abs().max(o1.abs()).max(o2.abs()) != ring {
                            continue;
                        }
                        let offs = [o0, o1, o2];
                        let mut c = [0usize; 3];
                        for i in 0..d {
                            c[i] = (home[i] as i64 + offs[i]).rem_euclid(b) as usize;
                        }
                        self.scan(Self::flat(self.b, d, &c), &pp, &mut best);
                    }
                }
            }
            ring += 1;
        }
    }
}

/// Two-sided estimate of `d_H(T^d, cloud)` in the chordal ℓ∞ metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HausdorffEstimate {
    pub lower: f64,
    pub upper: f64,
}

/// Scans the uniform grid of step at most `h`; `upper = lower + 2πh`.
pub fn hausdorff_to_torus(cloud: &TorusCloud, h: f64) -> Result<HausdorffEstimate> {
    let d = cloud.d;
    if d > 3 {
        return Err(Error::Unsupported(format!("grid Hausdorff estimate in dimension {d}")));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("grid step must be positive".into()));
    }
    if cloud.is_empty() {
        return Ok(HausdorffEstimate { lower: 2.0, upper: 2.0 });
    }
    let m = (1.0 / h).ceil() as usize;
    let total = m.checked_pow(d as u32).filter(|&t| t <= GRID_CAP).ok_or_else(|| {
        Error::EnumerationCap(format!("grid of {m}^{d} points exceeds {GRID_CAP}"))
    })?;
    let index = PointIndex::new(d, &cloud.points);
    let mut worst: f64 = 0.0;
    let mut p = vec![0.0; d];
    for idx in 0..total {
        let mut t = idx;
        for x in p.iter_mut() {
            *x = (t % m) as f64 / m as f64;
            t /= m;
        }
        worst = worst.max(index.nearest(&p));
    }
    let lower = chord(worst - cloud.resolution);
    let upper = (chord(worst) + 2.0 * PI / m as f64 + 2.0 * PI * cloud.resolution).min(2.0);
    Ok(HausdorffEstimate { lower, upper })
}

/// Certifies `d_H(T^d, cloud) < η` on a fixed dyadic subdivision.
///
/// Returns the certified upper bound, or `None` when a cell centre is at
/// least `η` away or cells would have to shrink below [`MIN_CELL`].
pub fn certify_density(cloud: &TorusCloud, eta: f64) -> Result<Option<f64>> {
    let d = cloud.d;
    if d > 3 {
        return Err(Error::Unsupported(format!("density certification in dimension {d}")));
    }
    if cloud.is_empty() {
        return Ok(None);
    }
    let index = PointIndex::new(d, &cloud.points);
    // Work in turns: chord(r) < η iff r < r_eta.
    let r_eta = if eta > 2.0 { 0.5 + f64::EPSILON } else { (eta / 2.0).asin() / PI };
    let mut walk = CellWalk { d, r_eta, pad: cloud.resolution, visited: 0, worst: 0.0 };
    let coarse = 4.0 / index.b as f64;
    let mut stack: Vec<([f64; 3], f64)> = vec![([0.5; 3], 1.0)];
    while let Some((c, side)) = stack.pop() {
        let r = index.nearest(&c[..d]);
        if side > coarse {
            match walk.judge(r, side)? {
                Step::Fail => return Ok(None),
                Step::Done => continue,
                Step::Split => walk.children(&c, side, |cc, half| stack.push((cc, half))),
            }
        } else {
            let cands = index.within(&c, r + side + walk.pad);
            if !walk.refine(&c, side, &cands)? {
                return Ok(None);
            }
        }
    }
    Ok(Some(chord(walk.worst)))
}

enum Step {
    Fail,
    Done,
    Split,
}

struct CellWalk {
    d: usize,
    r_eta: f64,
    pad: f64,
    visited: usize,
    worst: f64,
}

impl CellWalk {
    fn judge(&mut self, r: f64, side: f64) -> Result<Step> {
        self.visited += 1;
        if self.visited > CELL_CAP {
            return Err(Error::EnumerationCap(format!("more than {CELL_CAP} cells")));
        }
        if r >= self.r_eta {
            return Ok(Step::Fail);
        }
        let reach = r + side / 2.0 + self.pad;
        if reach < self.r_eta && reach < 0.5 {
            self.worst = self.worst.max(reach);
            return Ok(Step::Done);
        }
        if side / 2.0 < MIN_CELL {
            return Ok(Step::Fail);
        }
        Ok(Step::Split)
    }

    fn children(&self, c: &[f64; 3], side: f64, mut emit: impl FnMut([f64; 3], f64)) {
        let half = side / 2.0;
        for child in 0..(1usize << self.d) {
            let mut cc = *c;
            for (i, x) in cc.iter_mut().enumerate().take(self.d) {
                *x += if child >> i & 1 == 1 { half / 2.0 } else { -half / 2.0 };
            }
            emit(cc, half);
        }
    }

    /// Depth-first refinement of one cell; every nearest point of a
    /// descendant lies in `cands`.
    fn refine(&mut self, c: &[f64; 3], side: f64, cands: &[[f64; 3]]) -> Result<bool> {
        let d = self.d;
        let dist = |q: &[f64; 3]| (0..d).fold(0.0f64, |m, i| m.max(circ(c[i], q[i])));
        let r = cands.iter().map(dist).fold(f64::INFINITY, f64::min);
        match self.judge(r, side)? {
            Step::Fail => Ok(false),
            Step::Done => Ok(true),
            Step::Split => {
                let keep = r + side + self.pad;
                let sub: Vec<[f64; 3]> = cands.iter().filter(|q| dist(q) <= keep).copied().collect();
                let mut kids = Vec::with_capacity(1 << d);
                self.children(c, side, |cc, half| kids.push((cc, half)));
                for (cc, half) in kids {
                    if !self.refine(&cc, half, &sub)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }
}

/// Verdict of [`ergodicity_test`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Ergodic,
    NonErgodic,
    UnknownFloat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErgodicityReport {
    pub verdict: Verdict,
    /// Nonzero `m` with `m · g_ℓ ∈ Z` for every column.
    pub witness: Option<Vec<i64>>,
    /// Hermite basis of all such `m`.
    pub annihilator: Vec<Vec<i64>>,
    /// Exact `η_Q` when the subgroup is finite, 0 when ergodic.
    pub eta_q: Option<f64>,
    /// Order of the subgroup when finite.
    pub closure_size: Option<usize>,
}

/// Decides density of the column subgroup from exact phase data.
pub fn ergodicity_test(theta: &PhaseMatrix) -> Result<ErgodicityReport> {
    let d = theta.d();
    let mut tag: Option<&str> = None;
    let mut rat = vec![vec![Rational64::from_integer(0); d]; d];
    let mut coef = vec![vec![0i128; d]; d];
    for k in 0..d {
        for l in 0..d {
            match theta.entry(k, l) {
                PhaseEntry::Rational(r) => rat[k][l] = frac(*r),
                PhaseEntry::Irrational { tag: t, coef: c, offset } => {
                    if *c != 0 {
                        match tag {
                            Some(prev) if prev != t => {
                                return Err(Error::Unsupported(
                                    "more than one declared irrational".into(),
                                ))
                            }
                            _ => tag = Some(t),
                        }
                    }
                    coef[k][l] = *c as i128;
                    rat[k][l] = frac(*offset);
                }
                PhaseEntry::Float(_) => {
                    return Ok(ErgodicityReport {
                        verdict: Verdict::UnknownFloat,
                        witness: None,
                        annihilator: Vec::new(),
                        eta_q: None,
                        closure_size: None,
                    })
                }
            }
        }
    }
    let den: i64 = rat
        .iter()
        .flatten()
        .fold(1i64, |acc, r| acc.lcm(r.denom()));
    let den128 = den as i128;

    // Unknowns (m_1..m_d, t_1..t_d): Σ_k m_k D r[k][ℓ] - D t_ℓ = 0 and Σ_k m_k c[k][ℓ] = 0.
    let mut rows: Vec<Vec<i128>> = Vec::new();
    for l in 0..d {
        let mut row = vec![0i128; 2 * d];
        for k in 0..d {
            row[k] = (*rat[k][l].numer() as i128) * (den128 / *rat[k][l].denom() as i128);
        }
        row[d + l] = -den128;
        rows.push(row);
        if tag.is_some() {
            let mut row = vec![0i128; 2 * d];
            for k in 0..d {
                row[k] = coef[k][l];
            }
            rows.push(row);
        }
    }
    let kernel = integer_kernel(&rows, 2 * d)?;
    let projected: Vec<Vec<i128>> = kernel.iter().map(|v| v[..d].to_vec()).collect();
    let basis = hermite_rows(projected)?;
    let annihilator: Vec<Vec<i64>> = basis
        .iter()
        .map(|v| v.iter().map(|&x| to_i64(x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let witness = annihilator
        .iter()
        .min_by_key(|v| v.iter().map(|x| x.abs()).max().unwrap_or(0))
        .cloned();

    if annihilator.is_empty() {
        return Ok(ErgodicityReport {
            verdict: Verdict::Ergodic,
            witness: None,
            annihilator,
            eta_q: Some(0.0),
            closure_size: None,
        });
    }
    let (eta_q, closure_size) = if tag.is_none() {
        let (eta, size) = exact_eta_q(theta, den)?;
        (Some(eta), Some(size))
    } else {
        (None, None)
    };
    Ok(ErgodicityReport {
        verdict: Verdict::NonErgodic,
        witness,
        annihilator,
        eta_q,
        closure_size,
    })
}

fn to_i64(x: i128) -> Result<i64> {
    i64::try_from(x).map_err(|_| Error::Unsupported("integer overflow in lattice reduction".into()))
}

fn checked(a: i128, b: i128, q: i128) -> Result<i128> {
    q.checked_mul(b)
        .and_then(|p| a.checked_sub(p))
        .ok_or_else(|| Error::Unsupported("integer overflow in lattice reduction".into()))
}

/// Basis of `{x ∈ Z^cols : A x = 0}` by unimodular column reduction.
pub fn integer_kernel(a: &[Vec<i128>], cols: usize) -> Result<Vec<Vec<i128>>> {
    let mut m: Vec<Vec<i128>> = a.to_vec();
    let mut u: Vec<Vec<i128>> = (0..cols)
        .map(|i| (0..cols).map(|j| i128::from(i == j)).collect())
        .collect();
    // Column operations act on m[.][j] and u[.][j] together.
    let mut pivot = 0;
    for i in 0..m.len() {
        if pivot == cols {
            break;
        }
        loop {
            let nz: Vec<usize> = (pivot..cols).filter(|&j| m[i][j] != 0).collect();
            let Some(&jmin) = nz.iter().min_by_key(|&&j| m[i][j].abs()) else {
                break;
            };
            swap_cols(&mut m, &mut u, pivot, jmin);
            if nz.len() == 1 {
                pivot += 1;
                break;
            }
            for j in (pivot + 1)..cols {
                if m[i][j] == 0 {
                    continue;
                }
                let q = m[i][j].div_euclid(m[i][pivot]);
                for row in m.iter_mut() {
                    row[j] = checked(row[j], row[pivot], q)?;
                }
                for row in u.iter_mut() {
                    row[j] = checked(row[j], row[pivot], q)?;
                }
            }
        }
    }
    Ok((pivot..cols).map(|j| u.iter().map(|row| row[j]).collect()).collect())
}

fn swap_cols(m: &mut [Vec<i128>], u: &mut [Vec<i128>], a: usize, b: usize) {
    if a != b {
        for row in m.iter_mut() {
            row.swap(a, b);
        }
        for row in u.iter_mut() {
            row.swap(a, b);
        }
    }
}

/// Row Hermite normal form of the lattice spanned by `vectors`, zero rows
/// dropped.
pub fn hermite_rows(mut vectors: Vec<Vec<i128>>) -> Result<Vec<Vec<i128>>> {
    let Some(n) = vectors.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<Vec<i128>> = Vec::new();
    let mut rest = std::mem::take(&mut vectors);
    for col in 0..n {
        loop {
            rest.retain(|v| v.iter().any(|&x| x != 0));
            let nz: Vec<usize> = (0..rest.len()).filter(|&i| rest[i][col] != 0).collect();
            if nz.len() <= 1 {
                if let Some(&i) = nz.first() {
                    let mut v = rest.swap_remove(i);
                    if v[col] < 0 {
                        v.iter_mut().for_each(|x| *x = -*x);
                    }
                    out.push(v);
                }
                break;
            }
            let imin = *nz.iter().min_by_key(|&&i| rest[i][col].abs()).expect("non-empty");
            let p = rest[imin].clone();
            for &i in &nz {
                if i != imin {
                    let q = rest[i][col].div_euclid(p[col]);
                    for c in 0..n {
                        rest[i][c] = checked(rest[i][c], p[c], q)?;
                    }
                }
            }
        }
    }
    // Reduce entries above each pivot into [0, pivot).
    for i in 0..out.len() {
        let col = out[i].iter().position(|&x| x != 0).expect("non-zero row");
        let p = out[i].clone();
        for row in out.iter_mut().take(i) {
            let q = row[col].div_euclid(p[col]);
            for c in 0..n {
                row[c] = checked(row[c], p[c], q)?;
            }
        }
    }
    Ok(out)
}

/// Exact `η_Q` for all-rational data: the covering radius of the finite
/// subgroup is attained on the grid `(1/(2D)) Z^d`.
fn exact_eta_q(theta: &PhaseMatrix, den: i64) -> Result<(f64, usize)> {
    let d = theta.d();
    let cols = rational_columns(theta).expect("all rational");
    // Closure by breadth-first search over generators, in units of 1/D.
    let gens: Vec<Vec<i64>> = cols
        .iter()
        .map(|c| c.iter().map(|r| (r * den).to_integer()).collect())
        .collect();
    let mut seen: BTreeSet<Vec<i64>> = BTreeSet::new();
    let start = vec![0i64; d];
    seen.insert(start.clone());
    let mut frontier = vec![start];
    while let Some(p) = frontier.pop() {
        for g in &gens {
            for s in [1i64, -1] {
                let nxt: Vec<i64> = p
                    .iter()
                    .zip(g)
                    .map(|(&a, &b)| (a + s * b).rem_euclid(den))
                    .collect();
                if seen.insert(nxt.clone()) {
                    if seen.len() > POINT_CAP {
                        return Err(Error::EnumerationCap("finite closure too large".into()));
                    }
                    frontier.push(nxt);
                }
            }
        }
    }
    let two_d = 2 * den;
    let total = (two_d as usize)
        .checked_pow(d as u32)
        .filter(|&t| t <= GRID_CAP)
        .ok_or_else(|| Error::EnumerationCap(format!("exact η_Q grid (2·{den})^{d}")))?;
    // The circular ℓ∞ gap in lattice units is the king-move distance, so a
    // multi-source breadth-first search yields it exactly on every grid point.
    let side = two_d as usize;
    let flat = |g: &[usize]| g.iter().fold(0usize, |acc, &x| acc * side + x);
    let mut dist = vec![u32::MAX; total];
    let mut queue = VecDeque::with_capacity(seen.len());
    for p in &seen {
        let g: Vec<usize> = p.iter().map(|&x| (2 * x) as usize).collect();
        let i = flat(&g);
        if dist[i] == u32::MAX {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    let moves = 3usize.pow(d as u32);
    let mut g = vec![0usize; d];
    let mut worst_units = 0u32;
    while let Some(i) = queue.pop_front() {
        let here = dist[i];
        worst_units = worst_units.max(here);
        let mut t = i;
        for x in g.iter_mut().rev() {
            *x = t % side;
            t /= side;
        }
        for mv in 0..moves {
            let mut m = mv;
            let mut j = 0usize;
            for &x in &g {
                let step = m % 3;
                m /= 3;
                j = j * side + (x + side + step - 1) % side;
            }
            if dist[j] == u32::MAX {
                dist[j] = here + 1;
                queue.push_back(j);
            }
        }
    }
    let worst_units = worst_units as i64;
    Ok((chord(worst_units as f64 / two_d as f64), seen.len()))
}

/// `N_η` together with the certified bound that selected it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NEta {
    pub eta: f64,
    pub n_eta: usize,
    /// Certified upper estimate of `d_H(T^d, S_Q(N_η))`, below `η`.
    pub hausdorff_upper: f64,
}

/// Largest word length searched by [`find_n_eta`].
pub const MAX_WORD_LENGTH: usize = 4096;

/// Least `N` whose certified upper Hausdorff estimate is below `η`.
pub fn find_n_eta(q: &PhaseMatrix, eta: f64) -> Result<NEta> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument("η must be positive".into()));
    }
    let report = ergodicity_test(q)?;
    match (report.verdict, report.eta_q) {
        (Verdict::Ergodic, _) => {}
        (Verdict::NonErgodic, Some(eq)) if eta > eq => {}
        (Verdict::NonErgodic, Some(eq)) => return Err(Error::EtaInfeasible { eta, eta_q: eq }),
        (Verdict::NonErgodic, None) => {
            return Err(Error::Unsupported("η_Q of an infinite non-dense subgroup".into()))
        }
        (Verdict::UnknownFloat, _) => {
            return Err(Error::NotErgodic("undeclared floating-point phases".into()))
        }
    }
    let check = |n: usize| -> Result<Option<f64>> { certify_density(&subgroup_ball(q, n)?, eta) };
    // Exponential search for a certified N, then bisection (certification is monotone in N).
    if let Some(u) = check(0)? {
        return Ok(NEta { eta, n_eta: 0, hausdorff_upper: u });
    }
    let mut lo = 0usize;
    let mut hi = 1usize;
    let mut hi_bound = loop {
        if let Some(u) = check(hi)? {
            break u;
        }
        lo = hi;
        if hi >= MAX_WORD_LENGTH {
            return Err(Error::EnumerationCap(format!("no N <= {MAX_WORD_LENGTH} certifies η = {eta}")));
        }
        hi = (hi * 2).min(MAX_WORD_LENGTH);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match check(mid)? {
            Some(u) => {
                hi = mid;
                hi_bound = u;
            }
            None => lo = mid,
        }
    }
    Ok(NEta { eta, n_eta: hi, hausdorff_upper: hi_bound })
}

/// `ε = N_η δ + η` for a δ-almost Θ-commuting tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GaugeCertificate {
    pub delta: f64,
    pub eta: f64,
    pub n_eta: usize,
    pub epsilon: f64,
}

pub fn almost_gauge_certificate(delta: f64, eta: f64, n_eta: usize) -> Result<GaugeCertificate> {
    if !(delta >= 0.0 && eta >= 0.0) {
        return Err(Error::InvalidArgument("δ and η must be nonnegative".into()));
    }
    Ok(GaugeCertificate {
        delta,
        eta,
        n_eta,
        epsilon: n_eta as f64 * delta + eta,
    })
}

/// Ratio of consecutive δ candidates in the planner's search grid.
pub const DELTA_GRID_RATIO: f64 = 0.9;
/// Smallest δ the planner will consider.
pub const DELTA_GRID_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EpsDeltaPlan {
    pub d: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub n_eta: usize,
    pub hausdorff_upper: f64,
    pub delta: f64,
    /// `ε² / 200`.
    pub budget: f64,
    /// `ε²/200 - (N_η δ + (d-1)√δ)`.
    pub residual: f64,
    /// `10 √(N_η δ + η + (d-1)√δ)`.
    pub bound: f64,
}

impl EpsDeltaPlan {
    /// Recomputes every inequality from the plan's fields.
    pub fn validate(&self) -> bool {
        let budget = self.epsilon * self.epsilon / 200.0;
        let spend = self.n_eta as f64 * self.delta + (self.d - 1) as f64 * self.delta.sqrt();
        self.eta < budget
            && spend < budget
            && self.hausdorff_upper < self.eta
            && 10.0 * (self.n_eta as f64 * self.delta + self.eta + (self.d - 1) as f64 * self.delta.sqrt()).sqrt()
                < self.epsilon
    }
}

/// `η = ε²/400`, `N_η`, then the largest grid δ within the remaining budget.
pub fn eps_delta_plan(theta: &PhaseMatrix, epsilon: f64) -> Result<EpsDeltaPlan> {
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Error::InvalidArgument(format!("ε = {epsilon} outside (0, 2]")));
    }
    let report = ergodicity_test(theta)?;
    if report.verdict != Verdict::Ergodic {
        return Err(Error::NotErgodic(format!("{:?}", report.verdict)));
    }
    let d = theta.d();
    let budget = epsilon * epsilon / 200.0;
    let eta = epsilon * epsilon / 400.0;
    let ne = find_n_eta(theta, eta)?;
    let spend = |delta: f64| ne.n_eta as f64 * delta + (d - 1) as f64 * delta.sqrt();
    let mut k = 0i32;
    let delta = loop {
        let delta = DELTA_GRID_RATIO.powi(k);
        if delta < DELTA_GRID_FLOOR {
            return Err(Error::InvalidArgument("no δ on the search grid fits the budget".into()));
        }
        if spend(delta) < budget {
            break delta;
        }
        k += 1;
    };
    let plan = EpsDeltaPlan {
        d,
        epsilon,
        eta,
        n_eta: ne.n_eta,
        hausdorff_upper: ne.hausdorff_upper,
        delta,
        budget,
        residual: budget - spend(delta),
        bound: 10.0 * (spend(delta) + eta).sqrt(),
    };
    Ok(plan)
}
