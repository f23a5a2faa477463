//! Matrix-range probes: level-1 support functions, UCP feasibility on Choi
//! matrices, separation certificates and one-sided distance estimators.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::random::{ginibre, random_isometry};
use crate::numerics::{c64, hermitian_eigen, lambda_max, ComplexMatrix, C64};
use crate::tuples::UnitaryTuple;

/// Largest Choi matrix side `m n` handled densely.
pub const CHOI_CAP: usize = 64;
/// Highest matrix level probed by [`dmr_one_sided`].
pub const MAX_LEVEL: usize = 3;
pub const MEMBERSHIP_TOL: f64 = 1e-7;
pub const MAX_ITER: usize = 25_000;
/// Required excess of a separation certificate.
pub const CERTIFICATE_MARGIN: f64 = 1e-8;
pub const MIN_DIRECTIONS: usize = 8;
/// Iteration budget of each feasibility solve inside a distance bisection.
pub const DISTANCE_ITER: usize = 1500;
/// Bisection stops once the bracket is this narrow.
pub const DISTANCE_TOL: f64 = 1e-5;
pub const CERTIFICATE_RESTARTS: usize = 12;

const CHECK_EVERY: usize = 10;
const ASCENT_STEPS: usize = 80;

fn check_tuple(mats: &[ComplexMatrix], what: &str) -> Result<usize> {
    let n = mats.first().map(|m| m.rows()).ok_or_else(|| {
        Error::InvalidArgument(format!("{what} tuple is empty"))
    })?;
    if mats.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::InvalidArgument(format!("{what} matrices must be square of a common size")));
    }
    Ok(n)
}

fn check_choi_size(m: usize, n: usize) -> Result<()> {
    if m * n > CHOI_CAP {
        return Err(Error::SizeCap { dim: m * n, cap: CHOI_CAP });
    }
    Ok(())
}

fn support(mats: &[ComplexMatrix], c: &[C64]) -> f64 {
    let dim = mats[0].rows();
    let mut h = ComplexMatrix::zeros(dim, dim);
    for (a, &ci) in mats.iter().zip(c) {
        h = &h + &a.scale(ci.conj());
    }
    lambda_max(&h)
}

/// `λ_max(½ Σ (c̄_i A_i + c_i A_i*))`, the support function of `W_1(A)` at `c`.
pub fn support_level1(a: &UnitaryTuple, c: &[C64]) -> Result<f64> {
    if c.len() != a.d() {
        return Err(Error::InvalidArgument(format!("direction has {} entries, tuple has {}", c.len(), a.d())));
    }
    if c.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    Ok(support(a.matrices(), c))
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().all(|&p| !k.is_multiple_of(p)) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// Deterministic directions on the unit sphere of `Σ_i |c_i|`.
///
/// `d = 1` uses equally spaced phases; otherwise a Kronecker sequence sets
/// simplex magnitudes and phases.
pub fn dual_directions(d: usize, k: usize) -> Vec<Vec<C64>> {
    if d == 1 {
        return (0..k).map(|j| vec![C64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64)]).collect();
    }
    let steps: Vec<f64> = primes(2 * d - 1).iter().map(|&p| (p as f64).sqrt().fract()).collect();
    (0..k)
        .map(|j| {
            let u: Vec<f64> = steps.iter().map(|s| (0.5 + (j + 1) as f64 * s).fract()).collect();
            let mut cuts: Vec<f64> = u[..d - 1].to_vec();
            cuts.sort_by(f64::total_cmp);
            cuts.insert(0, 0.0);
            cuts.push(1.0);
            (0..d).map(|i| C64::from_polar(cuts[i + 1] - cuts[i], 2.0 * PI * u[d - 1 + i])).collect()
        })
        .collect()
}

/// Sampled level-1 Hausdorff distance in the max-modulus norm.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct W1Distance {
    pub estimate: f64,
    pub directions: usize,
    /// Worst-case underestimate of the sampled sup (`d = 1` only).
    pub resolution: Option<f64>,
}

impl W1Distance {
    pub fn upper(&self) -> Option<f64> {
        self.resolution.map(|r| self.estimate + r)
    }
}

pub fn w1_hausdorff(a: &UnitaryTuple, b: &UnitaryTuple, k: usize) -> Result<W1Distance> {
    if a.d() != b.d() {
        return Err(Error::InvalidArgument(format!("tuple lengths {} and {} differ", a.d(), b.d())));
    }
    if k < MIN_DIRECTIONS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_DIRECTIONS} directions, got {k}")));
    }
    let estimate = dual_directions(a.d(), k)
        .iter()
        .map(|c| (support(a.matrices(), c) - support(b.matrices(), c)).abs())
        .fold(0.0, f64::max);
    let radius = |t: &UnitaryTuple| t.matrices().iter().map(|m| m.operator_norm()).fold(0.0, f64::max);
    let resolution = (a.d() == 1).then(|| (radius(a) + radius(b)) * PI / k as f64);
    Ok(W1Distance { estimate, directions: k, resolution })
}

/// Choi matrix `J = Σ_ab E_ab ⊗ φ(E_ab)` of a map `M_m → M_n`, input leg outer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChoiMatrix {
    pub input_dim: usize,
    pub output_dim: usize,
    pub j: ComplexMatrix,
}

impl ChoiMatrix {
    pub fn new(input_dim: usize, output_dim: usize, j: ComplexMatrix) -> Result<Self> {
        let side = input_dim * output_dim;
        if j.shape() != (side, side) {
            return Err(Error::InvalidArgument(format!(
                "Choi matrix of shape {:?} for {input_dim} -> {output_dim}",
                j.shape()
            )));
        }
        Ok(Self { input_dim, output_dim, j })
    }

    pub fn identity(m: usize) -> Self {
        let j = ComplexMatrix::from_fn(m * m, m * m, |r, c| {
            let (a, s, b, t) = (r / m, r % m, c / m, c % m);
            if a == s && b == t { c64(1.0, 0.0) } else { c64(0.0, 0.0) }
        });
        Self { input_dim: m, output_dim: m, j }
    }

    /// `Y ↦ tr(Y)/m · I_n`.
    pub fn tracial(m: usize, n: usize) -> Self {
        let j = ComplexMatrix::scalar(m * n, c64(1.0 / m as f64, 0.0));
        Self { input_dim: m, output_dim: n, j }
    }

    /// `Y ↦ V* Y V` for an `m × n` isometry `V`.
    pub fn compression(v: &ComplexMatrix) -> Self {
        let (m, n) = v.shape();
        let j = ComplexMatrix::from_fn(m * n, m * n, |r, c| {
            let (a, s, b, t) = (r / n, r % n, c / n, c % n);
            v[(a, s)].conj() * v[(b, t)]
        });
        Self { input_dim: m, output_dim: n, j }
    }

    pub fn apply(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (m, n) = (self.input_dim, self.output_dim);
        if y.shape() != (m, m) {
            return Err(Error::InvalidArgument(format!("input of shape {:?}, expected {m}x{m}", y.shape())));
        }
        Ok(apply_choi(&self.j, m, n, y))
    }

    pub fn partial_trace_input(&self) -> ComplexMatrix {
        apply_choi(&self.j, self.input_dim, self.output_dim, &ComplexMatrix::identity(self.input_dim))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.j).values[0]
    }

    pub fn unitality_error(&self) -> f64 {
        (&self.partial_trace_input() - &ComplexMatrix::identity(self.output_dim)).operator_norm()
    }

    pub fn is_ucp(&self, tol: f64) -> bool {
        self.j.is_hermitian(tol) && self.min_eigenvalue() >= -tol && self.unitality_error() <= tol
    }
}

fn apply_choi(j: &ComplexMatrix, m: usize, n: usize, y: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n, n);
    for a in 0..m {
        for b in 0..m {
            let w = y[(a, b)];
            if w == c64(0.0, 0.0) {
                continue;
            }
            for s in 0..n {
                for t in 0..n {
                    out[(s, t)] += w * j[(a * n + s, b * n + t)];
                }
            }
        }
    }
    out
}

/// Conjugates by `I ⊗ Tr_in(J)^{-1/2}` so the map becomes exactly unital.
fn make_unital(j: &ComplexMatrix, m: usize, n: usize) -> ComplexMatrix {
    let mut j = j.clone();
    let mut t = apply_choi(&j, m, n, &ComplexMatrix::identity(m));
    let floor = hermitian_eigen(&t).values[0];
    if floor < 1e-9 {
        let s = 1e-6;
        j = &j.scale_re(1.0 - s) + &ChoiMatrix::tracial(m, n).j.scale_re(s);
        t = apply_choi(&j, m, n, &ComplexMatrix::identity(m));
    }
    let e = hermitian_eigen(&t);
    let inv_sqrt: Vec<f64> = e.values.iter().map(|&l| 1.0 / l.sqrt()).collect();
    let s = e.reconstruct(&inv_sqrt);
    let lift = ComplexMatrix::identity(m).kron(&s);
    let out = &(&lift * &j) * &lift;
    out.hermitian_part()
}

fn herm_to_vec(h: &ComplexMatrix, out: &mut Vec<f64>) {
    let n = h.rows();
    for i in 0..n {
        out.push(h[(i, i)].re);
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(SQRT_2 * h[(i, j)].re);
            out.push(SQRT_2 * h[(i, j)].im);
        }
    }
}

fn vec_to_herm(z: &[f64], n: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = c64(z[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let w = c64(z[k], z[k + 1]) / SQRT_2;
            h[(i, j)] = w;
            h[(j, i)] = w.conj();
            k += 2;
        }
    }
    h
}

fn mat_to_vec(m: &ComplexMatrix, out: &mut Vec<f64>) {
    for z in m.entries() {
        out.push(z.re);
        out.push(z.im);
    }
}

fn vec_to_mat(z: &[f64], n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |r, c| c64(z[2 * (r * n + c)], z[2 * (r * n + c) + 1]))
}

/// Projects onto the operator-norm ball of radius `t` by clipping singular values.
fn clip_singular(e: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let g = hermitian_eigen(&(&e.adjoint() * e));
    let scale: Vec<f64> = g
        .values
        .iter()
        .map(|&l| {
            let s = l.max(0.0).sqrt();
            if s > t { t / s } else { 1.0 }
        })
        .collect();
    e * &g.reconstruct(&scale)
}

fn psd_clip(h: &ComplexMatrix) -> ComplexMatrix {
    let e = hermitian_eigen(h);
    let clipped: Vec<f64> = e.values.iter().map(|&l| l.max(0.0)).collect();
    e.reconstruct(&clipped)
}

/// Affine set `{(J, E) : Tr_in J = I, φ_J(B_i) + E_i = X_i}` in real coordinates,
/// with `E` present only when `slack` is set.
struct Feasibility {
    m: usize,
    n: usize,
    sources: Vec<ComplexMatrix>,
    targets: Vec<ComplexMatrix>,
    slack: bool,
    rows: usize,
    cols: usize,
    lin: Vec<f64>,
    corr: Vec<f64>,
    rhs: Vec<f64>,
}

impl Feasibility {
    fn new(sources: &[ComplexMatrix], targets: &[ComplexMatrix], slack: bool) -> Self {
        let (m, n, d) = (sources[0].rows(), targets[0].rows(), sources.len());
        let side = m * n;
        let cols = side * side + if slack { 2 * d * n * n } else { 0 };
        let rows = 2 * n * n * (1 + d);
        let mut f = Self {
            m,
            n,
            sources: sources.to_vec(),
            targets: targets.to_vec(),
            slack,
            rows,
            cols,
            lin: vec![0.0; rows * cols],
            corr: vec![0.0; rows * cols],
            rhs: Vec::with_capacity(rows),
        };
        let mut basis = vec![0.0; cols];
        for k in 0..cols {
            basis[k] = 1.0;
            let col = f.apply_linear(&basis);
            basis[k] = 0.0;
            for (r, v) in col.into_iter().enumerate() {
                f.lin[r * cols + k] = v;
            }
        }
        mat_to_vec(&ComplexMatrix::identity(n), &mut f.rhs);
        for x in targets {
            mat_to_vec(x, &mut f.rhs);
        }
        let gram = ComplexMatrix::from_fn(rows, rows, |a, b| {
            c64((0..cols).map(|k| f.lin[a * cols + k] * f.lin[b * cols + k]).sum(), 0.0)
        });
        let e = hermitian_eigen(&gram);
        let top = e.values.last().copied().unwrap_or(0.0).max(0.0);
        let inv: Vec<f64> = e.values.iter().map(|&l| if l > 1e-12 * top { 1.0 / l } else { 0.0 }).collect();
        let pinv = e.reconstruct(&inv);
        for k in 0..cols {
            for b in 0..rows {
                f.corr[k * rows + b] = (0..rows).map(|a| f.lin[a * cols + k] * pinv[(a, b)].re).sum();
            }
        }
        f
    }

    fn side(&self) -> usize {
        self.m * self.n
    }

    fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.side() * self.side())
    }

    fn apply_linear(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (jz, ez) = self.split(z);
        let j = vec_to_herm(jz, self.side());
        let mut out = Vec::with_capacity(self.rows);
        mat_to_vec(&apply_choi(&j, self.m, n, &ComplexMatrix::identity(self.m)), &mut out);
        for (i, b) in self.sources.iter().enumerate() {
            let mut img = apply_choi(&j, self.m, n, b);
            if self.slack {
                img = &img + &vec_to_mat(&ez[2 * i * n * n..2 * (i + 1) * n * n], n);
            }
            mat_to_vec(&img, &mut out);
        }
        out
    }

    fn project_affine(&self, z: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        let resid: Vec<f64> = (0..rows)
            .map(|r| (0..cols).map(|k| self.lin[r * cols + k] * z[k]).sum::<f64>() - self.rhs[r])
            .collect();
        for (k, x) in z.iter_mut().enumerate() {
            *x -= (0..rows).map(|r| self.corr[k * rows + r] * resid[r]).sum::<f64>();
        }
    }

    fn project_cone(&self, z: &[f64], radius: f64) -> Vec<f64> {
        let n = self.n;
        let (jz, ez) = self.split(z);
        let mut out = Vec::with_capacity(self.cols);
        herm_to_vec(&psd_clip(&vec_to_herm(jz, self.side())), &mut out);
        if self.slack {
            for i in 0..self.sources.len() {
                let e = vec_to_mat(&ez[2 * i * n * n..2 * (i + 1) * n * n], n);
                mat_to_vec(&clip_singular(&e, radius), &mut out);
            }
        }
        out
    }

    fn encode(&self, choi: &ChoiMatrix, radius: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.cols);
        herm_to_vec(&choi.j, &mut z);
        if self.slack {
            for (b, x) in self.sources.iter().zip(&self.targets) {
                let e = x - &apply_choi(&choi.j, self.m, self.n, b);
                mat_to_vec(&clip_singular(&e, radius), &mut z);
            }
        }
        z
    }

    fn repair(&self, z: &[f64]) -> ChoiMatrix {
        let j = vec_to_herm(self.split(z).0, self.side());
        ChoiMatrix { input_dim: self.m, output_dim: self.n, j: make_unital(&j, self.m, self.n) }
    }

    /// `max_i ‖X_i − φ_J(B_i)‖`.
    fn value(&self, choi: &ChoiMatrix) -> f64 {
        self.sources
            .iter()
            .zip(&self.targets)
            .map(|(b, x)| (x - &apply_choi(&choi.j, self.m, self.n, b)).operator_norm())
            .fold(0.0, f64::max)
    }

    /// Dykstra iteration between the cone (times the slack ball) and the affine
    /// set; stops once a repaired iterate has value at most `goal`.
    fn solve(&self, start: &ChoiMatrix, radius: f64, goal: f64, max_iter: usize) -> Solve {
        let mut x = self.encode(start, radius);
        let mut q = vec![0.0; self.cols];
        let mut best = start.clone();
        let mut best_value = self.value(start);
        let mut iterations = 0;
        while iterations < max_iter && best_value > goal {
            for _ in 0..CHECK_EVERY {
                let mut y = x.clone();
                self.project_affine(&mut y);
                let shifted: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
                x = self.project_cone(&shifted, radius);
                for ((qk, sk), xk) in q.iter_mut().zip(&shifted).zip(&x) {
                    *qk = sk - xk;
                }
            }
            iterations += CHECK_EVERY;
            let cand = self.repair(&x);
            let v = self.value(&cand);
            if v < best_value {
                best_value = v;
                best = cand;
            }
        }
        Solve { choi: best, value: best_value, iterations }
    }
}

struct Solve {
    choi: ChoiMatrix,
    value: f64,
    iterations: usize,
}

/// `Σ_i B_i ⊗ Y_i` plus its adjoint.
fn pencil(b: &[ComplexMatrix], y: &[ComplexMatrix]) -> ComplexMatrix {
    let side = b[0].rows() * y[0].rows();
    let mut h = ComplexMatrix::zeros(side, side);
    for (bi, yi) in b.iter().zip(y) {
        h = &h + &bi.kron(yi);
    }
    &h + &h.adjoint()
}

/// Top eigenvalue of the pencil and its gradient in each `B_i`.
fn pencil_top(b: &[ComplexMatrix], y: &[ComplexMatrix]) -> (f64, Vec<ComplexMatrix>) {
    let h = pencil(b, y);
    let e = hermitian_eigen(&h);
    let top = e.values.len() - 1;
    let x = e.eigenvector(top);
    let (n, dim) = (b[0].rows(), y[0].rows());
    let grads = y
        .iter()
        .map(|yi| {
            ComplexMatrix::from_fn(n, n, |s, t| {
                let mut r = c64(0.0, 0.0);
                for al in 0..dim {
                    for be in 0..dim {
                        r += x[s * dim + al].conj() * yi[(al, be)] * x[t * dim + be];
                    }
                }
                r.conj() * 2.0
            })
        })
        .collect();
    (e.values[top], grads)
}

/// Matrix-direction witness that `X` lies outside `W_n(A)`:
/// `λ_max(Σ B_i ⊗ X_i + h.c.) > λ_max(Σ B_i ⊗ A_i + h.c.) + margin`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeparationCertificate {
    pub directions: Vec<ComplexMatrix>,
    pub lambda_target: f64,
    pub lambda_source: f64,
    pub gap: f64,
}

impl SeparationCertificate {
    fn evaluate(directions: Vec<ComplexMatrix>, a: &[ComplexMatrix], x: &[ComplexMatrix]) -> Self {
        let lambda_target = lambda_max(&pencil(&directions, x));
        let lambda_source = lambda_max(&pencil(&directions, a));
        Self { directions, lambda_target, lambda_source, gap: lambda_target - lambda_source }
    }

    /// Recomputes both eigenvalues and checks the strict margin.
    pub fn verify(&self, a: &[ComplexMatrix], x: &[ComplexMatrix]) -> bool {
        if self.directions.len() != a.len() || a.len() != x.len() {
            return false;
        }
        let again = Self::evaluate(self.directions.clone(), a, x);
        again.lambda_target > again.lambda_source + CERTIFICATE_MARGIN
    }

    /// Lower bound on `max_i ‖X_i − Y_i‖` over every `Y ∈ W_n(A)`.
    pub fn distance_lower_bound(&self) -> f64 {
        let weight: f64 = self.directions.iter().map(|b| b.operator_norm()).sum();
        if weight > 0.0 { (self.gap / (2.0 * weight)).max(0.0) } else { 0.0 }
    }
}

fn normalize(b: &mut [ComplexMatrix]) {
    let norm = b.iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for m in b.iter_mut() {
            *m = m.scale_re(1.0 / norm);
        }
    }
}

/// Projected eigenvector ascent on the certificate gap from random starts.
pub fn search_certificate(
    a: &[ComplexMatrix],
    x: &[ComplexMatrix],
    restarts: usize,
    seed: u64,
) -> Option<SeparationCertificate> {
    let n = x[0].rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SeparationCertificate> = None;
    for _ in 0..restarts {
        let mut b: Vec<ComplexMatrix> = (0..a.len()).map(|_| ginibre(n, n, &mut rng)).collect();
        normalize(&mut b);
        let gap_of = |b: &[ComplexMatrix]| {
            let (lx, gx) = pencil_top(b, x);
            let (la, ga) = pencil_top(b, a);
            (lx - la, gx.iter().zip(&ga).map(|(p, q)| p - q).collect::<Vec<_>>())
        };
        let (mut gap, mut grad) = gap_of(&b);
        let mut step = 0.5;
        for _ in 0..ASCENT_STEPS {
            let mut trial: Vec<ComplexMatrix> =
                b.iter().zip(&grad).map(|(bi, gi)| bi + &gi.scale_re(step)).collect();
            normalize(&mut trial);
            let (g, gr) = gap_of(&trial);
            if g > gap {
                b = trial;
                gap = g;
                grad = gr;
                step = (step * 1.5).min(4.0);
            } else {
                step *= 0.5;
                if step < 1e-6 {
                    break;
                }
            }
        }
        if best.as_ref().is_none_or(|c| gap > c.gap) {
            best = Some(SeparationCertificate::evaluate(b, a, x));
        }
    }
    best.filter(|c| c.verify(a, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipStatus {
    Member,
    NonMember,
    Undecided,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MembershipResult {
    pub level: usize,
    pub status: MembershipStatus,
    /// `max_i ‖φ(A_i) − X_i‖` for the best UCP map found.
    pub residual: f64,
    pub iterations: usize,
    pub choi: ChoiMatrix,
    pub certificate: Option<SeparationCertificate>,
}

impl MembershipResult {
    /// Re-evaluates the verdict from its own evidence.
    pub fn is_sound(&self, a: &[ComplexMatrix], x: &[ComplexMatrix], tol: f64) -> bool {
        match self.status {
            MembershipStatus::Member => {
                self.choi.is_ucp(1e-9)
                    && a.iter().zip(x).all(|(ai, xi)| {
                        self.choi.apply(ai).is_ok_and(|img| (&img - xi).operator_norm() <= tol)
                    })
            }
            MembershipStatus::NonMember => self.certificate.as_ref().is_some_and(|c| c.verify(a, x)),
            MembershipStatus::Undecided => true,
        }
    }
}

/// Decides `X ∈ W_n(A)` by Dykstra projections, falling back to a certificate search.
pub fn ucp_membership(
    a: &UnitaryTuple,
    x: &[ComplexMatrix],
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<MembershipResult> {
    let n = check_tuple(x, "target")?;
    if x.len() != a.d() {
        return Err(Error::InvalidArgument(format!("{} targets for a {}-tuple", x.len(), a.d())));
    }
    check_choi_size(a.dim(), n)?;
    let feas = Feasibility::new(a.matrices(), x, false);
    let solve = feas.solve(&ChoiMatrix::tracial(a.dim(), n), 0.0, tol, max_iter);
    let (status, certificate) = if solve.value <= tol {
        (MembershipStatus::Member, None)
    } else {
        match search_certificate(a.matrices(), x, CERTIFICATE_RESTARTS, seed) {
            Some(c) => (MembershipStatus::NonMember, Some(c)),
            None => (MembershipStatus::Undecided, None),
        }
    };
    Ok(MembershipResult {
        level: n,
        status,
        residual: solve.value,
        iterations: solve.iterations,
        choi: solve.choi,
        certificate,
    })
}

/// Best UCP map `Ψ: M_m → M_n` found for `min max_i ‖X_i − Ψ(B_i)‖`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UcpFit {
    pub value: f64,
    /// Separation-certificate bound, 0 when no certificate is found.
    pub lower: f64,
    pub choi: ChoiMatrix,
}

/// Bisects on the slack radius, solving each feasibility problem by Dykstra.
fn ucp_distance(b: &[ComplexMatrix], x: &[ComplexMatrix], seeds: &[ChoiMatrix]) -> UcpFit {
    let (m, n) = (b[0].rows(), x[0].rows());
    let feas = Feasibility::new(b, x, true);
    let mut starts = vec![ChoiMatrix::tracial(m, n)];
    if m == n {
        starts.push(ChoiMatrix::identity(m));
    }
    starts.extend(seeds.iter().cloned());
    let (mut best, mut hi) = starts
        .into_iter()
        .map(|c| {
            let v = feas.value(&c);
            (c, v)
        })
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("tracial start");
    let mut lo = 0.0;
    while hi - lo > DISTANCE_TOL && hi > 1e-12 {
        let t = 0.5 * (lo + hi);
        let reach = t + 0.25 * DISTANCE_TOL;
        let s = feas.solve(&best, t, reach, DISTANCE_ITER);
        if s.value < hi {
            hi = s.value;
            best = s.choi;
        }
        if s.value > reach {
            lo = t;
        }
    }
    let lower = search_certificate(b, x, CERTIFICATE_RESTARTS, 0).map_or(0.0, |c| c.distance_lower_bound());
    UcpFit { value: hi, lower, choi: best }
}

/// Upper estimate of the relaxed dilation distance `d_rD(A → B) = min_Ψ ‖A − Ψ(B)‖`.
pub fn drd_estimate(a: &UnitaryTuple, b: &UnitaryTuple) -> Result<UcpFit> {
    if a.d() != b.d() {
        return Err(Error::InvalidArgument(format!("tuple lengths {} and {} differ", a.d(), b.d())));
    }
    check_choi_size(b.dim(), a.dim())?;
    Ok(ucp_distance(b.matrices(), a.matrices(), &[]))
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SamplingMeta {
    pub level: usize,
    pub samples: usize,
    pub seed: u64,
    pub scheme: &'static str,
    pub norm: &'static str,
    pub level_capped: bool,
}

/// Level-capped one-sided matrix-range distance estimate.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DmrEstimate {
    pub lower: f64,
    pub upper: f64,
    pub sampling: SamplingMeta,
}

/// Boundary-seeking compressions of `A` (ampliated when `n > dim A`).
fn boundary_samples(a: &UnitaryTuple, n: usize, samples: usize, rng: &mut ChaCha8Rng) -> Vec<(ComplexMatrix, Vec<ComplexMatrix>)> {
    let source: Vec<ComplexMatrix> = if n <= a.dim() {
        a.matrices().to_vec()
    } else {
        a.matrices().iter().map(|m| m.kron(&ComplexMatrix::identity(n))).collect()
    };
    let dim = source[0].rows();
    let compress = |v: &ComplexMatrix| -> Vec<ComplexMatrix> {
        source.iter().map(|s| &(&v.adjoint() * s) * v).collect()
    };
    let mut out = Vec::new();
    if n == dim {
        let v = ComplexMatrix::identity(n);
        out.push((v.clone(), compress(&v)));
    }
    for _ in 0..samples {
        let g: Vec<ComplexMatrix> = (0..a.d()).map(|_| ginibre(n, n, rng)).collect();
        let h = pencil(&g, &source);
        let e = hermitian_eigen(&h);
        let x = e.eigenvector(e.values.len() - 1);
        let w = ComplexMatrix::from_fn(dim, n, |al, s| x[s * dim + al]);
        let gram = hermitian_eigen(&(&w.adjoint() * &w));
        let v = if gram.values[0] > 1e-10 {
            let inv: Vec<f64> = gram.values.iter().map(|l| 1.0 / l.sqrt()).collect();
            &w * &gram.reconstruct(&inv)
        } else {
            random_isometry(dim, n, rng)
        };
        out.push((v.clone(), compress(&v)));
    }
    out
}

/// One-sided distance from `W_n(A)` into `W_n(B)` over sampled boundary points.
///
/// `upper` maximizes the fitted distance over the samples; `lower` comes from
/// separation certificates and is rigorous.
pub fn dmr_one_sided(a: &UnitaryTuple, b: &UnitaryTuple, n: usize, samples: usize, seed: u64) -> Result<DmrEstimate> {
    if a.d() != b.d() {
        return Err(Error::InvalidArgument(format!("tuple lengths {} and {} differ", a.d(), b.d())));
    }
    if n == 0 || n > MAX_LEVEL {
        return Err(Error::SizeCap { dim: n, cap: MAX_LEVEL });
    }
    check_choi_size(b.dim(), n)?;
    check_choi_size(a.dim().max(n), n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = boundary_samples(a, n, samples, &mut rng);
    let (mut lower, mut upper) = (0.0f64, 0.0f64);
    for (k, (v, x)) in points.iter().enumerate() {
        let seeds: Vec<ChoiMatrix> =
            if v.rows() == b.dim() && a.dim().max(n) == b.dim() { vec![ChoiMatrix::compression(v)] } else { vec![] };
        upper = upper.max(ucp_distance(b.matrices(), x, &seeds).value);
        if let Some(c) = search_certificate(b.matrices(), x, CERTIFICATE_RESTARTS, seed.wrapping_add(k as u64 + 1)) {
            lower = lower.max(c.distance_lower_bound());
        }
    }
    Ok(DmrEstimate {
        lower,
        upper: upper.max(lower),
        sampling: SamplingMeta {
            level: n,
            samples: points.len(),
            seed,
            scheme: "gaussian-eigenprojection",
            norm: "max-operator",
            level_capped: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuples::{clock, gauge_rotate, random_unitary_tuple, shift};
    use proptest::prelude::*;

    fn single(m: ComplexMatrix) -> UnitaryTuple {
        UnitaryTuple::new(vec![m]).unwrap()
    }

    fn scalar(z: C64) -> UnitaryTuple {
        single(ComplexMatrix::scalar(1, z))
    }

    fn hull_support(points: &[C64], c: C64) -> f64 {
        points.iter().map(|p| (c.conj() * p).re).fold(f64::NEG_INFINITY, f64::max)
    }

    fn roots(n: usize, rot: f64) -> Vec<C64> {
        (0..n).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64 + rot)).collect()
    }

    #[test]
    fn support_of_trivial_ranges() {
        let id = single(ComplexMatrix::identity(3));
        assert!((support_level1(&id, &[c64(1.0, 0.0)]).unwrap() - 1.0).abs() < 1e-12);
        let c4 = single(clock(4));
        assert!((support_level1(&c4, &[c64(1.0, 0.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert!(support_level1(&c4, &[c64(0.0, 0.0)]).is_err());
    }

    #[test]
    fn pentagon_support_matches_hull() {
        let c5 = single(clock(5));
        let pts = roots(5, 0.0);
        for c in dual_directions(1, 720) {
            let h = support_level1(&c5, &c).unwrap();
            assert!((h - hull_support(&pts, c[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn directions_lie_on_the_dual_sphere() {
        for d in 1..4 {
            for c in dual_directions(d, 50) {
                let s: f64 = c.iter().map(|z| z.norm()).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn w1_trivial_cases() {
        let c4 = single(clock(4));
        assert!(w1_hausdorff(&c4, &c4, 64).unwrap().estimate < 1e-12);
        let d = w1_hausdorff(&scalar(c64(1.0, 0.0)), &scalar(c64(-1.0, 0.0)), 64).unwrap();
        assert!((d.estimate - 2.0).abs() < 1e-12);
        assert!(w1_hausdorff(&c4, &c4, 4).is_err());
    }

    #[test]
    fn w1_rotated_squares() {
        let c4 = single(clock(4));
        let rot = C64::from_polar(1.0, PI / 4.0);
        let r = gauge_rotate(&c4, &[rot]).unwrap();
        let est = w1_hausdorff(&c4, &r, 720).unwrap();
        let (a, b) = (roots(4, 0.0), roots(4, PI / 4.0));
        let oracle = (0..100_000)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / 100_000.0))
            .map(|c| (hull_support(&a, c) - hull_support(&b, c)).abs())
            .fold(0.0, f64::max);
        assert!((est.estimate - oracle).abs() <= est.resolution.unwrap());
        assert!((est.estimate - oracle).abs() < 1e-4);
    }

    #[test]
    fn choi_constructors_are_ucp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_isometry(4, 2, &mut rng);
        for c in [ChoiMatrix::identity(3), ChoiMatrix::tracial(3, 2), ChoiMatrix::compression(&v)] {
            assert!(c.is_ucp(1e-12));
        }
        let y = ginibre(4, 4, &mut rng);
        let img = ChoiMatrix::compression(&v).apply(&y).unwrap();
        assert!(img.max_abs_diff(&(&(&v.adjoint() * &y) * &v)) < 1e-12);
        let id = ChoiMatrix::identity(4).apply(&y).unwrap();
        assert!(id.max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn real_coordinates_are_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = ginibre(4, 4, &mut rng).hermitian_part();
        let mut z = Vec::new();
        herm_to_vec(&h, &mut z);
        let norm: f64 = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - h.frobenius_norm()).abs() < 1e-12);
        assert!(vec_to_herm(&z, 4).max_abs_diff(&h) < 1e-14);
    }

    #[test]
    fn compression_point_is_member() {
        let c5 = single(clock(5));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=2 {
            let v = random_isometry(5, n, &mut rng);
            let x = vec![&(&v.adjoint() * &clock(5)) * &v];
            let r = ucp_membership(&c5, &x, MEMBERSHIP_TOL, MAX_ITER, 1).unwrap();
            assert_eq!(r.status, MembershipStatus::Member, "residual {}", r.residual);
            assert!(r.is_sound(c5.matrices(), &x, MEMBERSHIP_TOL));
        }
    }

    #[test]
    fn random_pair_compression_is_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_unitary_tuple(2, 6, &mut rng);
        let v = random_isometry(6, 2, &mut rng);
        let x: Vec<ComplexMatrix> = a.matrices().iter().map(|m| &(&v.adjoint() * m) * &v).collect();
        let r = ucp_membership(&a, &x, MEMBERSHIP_TOL, MAX_ITER, 2).unwrap();
        assert_eq!(r.status, MembershipStatus::Member, "residual {}", r.residual);
        assert!(r.is_sound(a.matrices(), &x, MEMBERSHIP_TOL));
    }

    #[test]
    fn tracial_scalars_are_members() {
        let a = UnitaryTuple::new(vec![clock(3), shift(3)]).unwrap();
        let x: Vec<ComplexMatrix> =
            a.matrices().iter().map(|m| ComplexMatrix::scalar(1, m.trace() / 3.0)).collect();
        let r = ucp_membership(&a, &x, MEMBERSHIP_TOL, MAX_ITER, 3).unwrap();
        assert_eq!(r.status, MembershipStatus::Member);
    }

    #[test]
    fn oversized_target_is_separated() {
        let c5 = single(clock(5));
        let x = vec![clock(2).scale_re(1.2)];
        let r = ucp_membership(&c5, &x, MEMBERSHIP_TOL, MAX_ITER, 4).unwrap();
        assert_eq!(r.status, MembershipStatus::NonMember);
        assert!(r.is_sound(c5.matrices(), &x, MEMBERSHIP_TOL));
        assert!(r.certificate.unwrap().distance_lower_bound() > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c5 = single(clock(5));
        let x = vec![ComplexMatrix::zeros(2, 3)];
        assert!(ucp_membership(&c5, &x, MEMBERSHIP_TOL, 10, 0).is_err());
        assert!(ucp_membership(&c5, &[clock(2), clock(2)], MEMBERSHIP_TOL, 10, 0).is_err());
    }

    #[test]
    fn drd_trivial_cases() {
        let a = UnitaryTuple::new(vec![clock(3), shift(3)]).unwrap();
        assert!(drd_estimate(&a, &a).unwrap().value <= 1e-7);
        let (z1, z2) = (C64::from_polar(1.0, 0.3), C64::from_polar(1.0, 2.0));
        let fit = drd_estimate(&scalar(z1), &scalar(z2)).unwrap();
        assert!((fit.value - (z1 - z2).norm()).abs() < 1e-9);
    }

    #[test]
    fn drd_point_outside_pentagon() {
        let z = C64::from_polar(1.0, PI / 5.0);
        let fit = drd_estimate(&scalar(z), &single(clock(5))).unwrap();
        let oracle = 1.0 - (PI / 5.0).cos();
        assert!((fit.value - oracle).abs() < 1e-4, "value {}", fit.value);
        assert!(fit.lower <= oracle + 1e-12 && fit.lower > 0.0);
    }

    #[test]
    fn dmr_trivial_cases() {
        let a = single(clock(3));
        let e = dmr_one_sided(&a, &a, 1, 4, 9).unwrap();
        assert_eq!(e.lower, 0.0);
        assert!(e.upper <= 1e-6, "upper {}", e.upper);
        let e = dmr_one_sided(&scalar(c64(1.0, 0.0)), &scalar(c64(-1.0, 0.0)), 1, 3, 9).unwrap();
        assert!((e.lower - 2.0).abs() < 1e-6 && (e.upper - 2.0).abs() < 1e-6);
        assert!(dmr_one_sided(&a, &a, 4, 1, 0).is_err());
    }

    #[test]
    fn summand_is_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_unitary_tuple(1, 2, &mut rng);
        let c = random_unitary_tuple(1, 2, &mut rng);
        let b = UnitaryTuple::direct_sum(&[&a, &c]).unwrap();
        let e = dmr_one_sided(&a, &b, 2, 3, 1).unwrap();
        assert!(e.upper <= 1e-4, "upper {}", e.upper);
    }

    #[test]
    fn certificate_gradient_matches_difference_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let y = vec![ginibre(3, 3, &mut rng), ginibre(3, 3, &mut rng)];
        let b = vec![ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng)];
        let dir = vec![ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng)];
        let (l0, g) = pencil_top(&b, &y);
        let h = 1e-6;
        let moved: Vec<ComplexMatrix> = b.iter().zip(&dir).map(|(p, q)| p + &q.scale_re(h)).collect();
        let (l1, _) = pencil_top(&moved, &y);
        let predicted: f64 = dir
            .iter()
            .zip(&g)
            .map(|(d, gi)| d.entries().iter().zip(gi.entries()).map(|(p, q)| (p * q.conj()).re).sum::<f64>())
            .sum();
        assert!(((l1 - l0) / h - predicted).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn lambda_max_drops_under_compression(seed in 0u64..1000, n in 1usize..3, m in 2usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = n.max(2);
            let h = ginibre(k * 4, k * 4, &mut rng).hermitian_part();
            let v = random_isometry(4, m.min(4), &mut rng);
            let phi = ChoiMatrix::compression(&v);
            let out = ComplexMatrix::from_fn(k * m, k * m, |r, c| {
                let block = h.block((r / m) * 4, (c / m) * 4, 4, 4);
                phi.apply(&block).unwrap()[(r % m, c % m)]
            });
            prop_assert!(lambda_max(&out) <= lambda_max(&h) + 1e-9);
        }

        #[test]
        fn support_is_monotone_under_summands(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_unitary_tuple(2, 2, &mut rng);
            let c = random_unitary_tuple(2, 3, &mut rng);
            let b = UnitaryTuple::direct_sum(&[&a, &c]).unwrap();
            for dir in dual_directions(2, 32) {
                prop_assert!(support_level1(&a, &dir).unwrap() <= support_level1(&b, &dir).unwrap() + 1e-10);
            }
        }
    }
}
