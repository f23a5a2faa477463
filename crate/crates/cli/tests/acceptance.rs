//! Acceptance gate: one pass/fail line per criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dlab_cli::plan_claims;
use dlab_core::dilation::{choose_window, dilate_pair};
use dlab_core::mrange::{
    drd_estimate, dmr_one_sided, dual_directions, support_level1, ucp_membership, MembershipStatus, MAX_ITER,
    MEMBERSHIP_TOL,
};
use dlab_core::numerics::eigen::hermitian_eigen;
use dlab_core::numerics::random::{haar_unitary, random_isometry};
use dlab_core::numerics::{c64, cis_turns};
use dlab_core::reverse::reverse_dilate_pair;
use dlab_core::torus::{certify_density, chord, circ, hausdorff_to_torus, subgroup_ball};
use dlab_core::tuples::{clock, perturb_to_defect, random_almost_commuting_pair, random_unitary_tuple, shift};
use dlab_core::{
    dilate_full, eps_delta_plan, ergodicity_test, find_n_eta, ComplexMatrix, PhaseMatrix, Truncation, UnitaryTuple,
    Verdict, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const EXACT_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-9;
const COR_BOUND: f64 = 0.2;
const ETA_Q_TOL: f64 = 1e-6;
const HULL_TOL: f64 = 1e-3;
const CROSS_TOL: f64 = 1e-3;
const BOUNDARY_SCALE: f64 = 1.2;

type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let o = f();
    let spent = start.elapsed();
    outcome(o.pass && spent < budget, format!("{} [{:.2}s of {}s]", o.detail, spent.as_secs_f64(), budget.as_secs()))
}

fn weyl_pair_exactness() -> Outcome {
    let (u, v) = (clock(8), shift(8));
    let p = dilate_pair(&u, &v, cis_turns(1.0 / 8.0), 24, Some(5)).unwrap();
    let entrywise = p.compressed_u.max_abs_diff(&u.scale_re(10.0 / 11.0));
    let gap = ((&u - &p.compressed_u).operator_norm() - 1.0 / 11.0).abs();
    let pass = p.output_defect <= EXACT_TOL && entrywise <= EXACT_TOL && gap <= EXACT_TOL;
    outcome(pass, format!("defect {:.1e}, entrywise {entrywise:.1e}, |norm - 1/11| {gap:.1e}", p.output_defect))
}

fn pair_bound_ledger() -> Outcome {
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let target = r.random_range(0.001..0.1);
        let (u, v, q) = random_almost_commuting_pair(6, target, &mut r).unwrap();
        let n = choose_window(target).unwrap();
        let p = dilate_pair(&u, &v, q, 2 * n + 2, Some(n)).unwrap();
        // Oracle: dense ι* ṽ ι against the structured compression.
        let iota = p.window.dense().unwrap();
        let dense = &(&iota.adjoint() * &p.v_tilde.densify().unwrap()) * &iota;
        let measured = (&v - &dense).operator_norm();
        let nf = n as f64;
        let lemma = nf * (nf + 1.0) / (2.0 * nf + 1.0) * p.delta + BOUND_SLACK;
        let root = p.delta.sqrt() + BOUND_SLACK;
        if measured > lemma || measured > root || (measured - p.error_v).abs() > 1e-10 {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(measured / lemma);
    }
    outcome(violations == 0, format!("{violations} violations over 100 seeds, worst ratio {worst_ratio:.4}"))
}

fn d3_theta() -> PhaseMatrix {
    PhaseMatrix::rational_upper(3, &[(1, 2), (1, 2), (0, 1)]).unwrap()
}

fn corollary_ledger() -> Outcome {
    let theta = d3_theta();
    let base = dlab_core::tuples::weyl_tuple(&theta).unwrap();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..25u64 {
        let mut r = rng(1000 + seed);
        let w = haar_unitary(base.dim(), &mut r);
        let rotated = base.conjugate(&w).unwrap();
        let u = perturb_to_defect(&rotated, &theta, 0.01, &mut r).unwrap();
        let full = dilate_full(&u, &theta, Truncation::default()).unwrap();
        let direct_ok = full.direct_error <= full.sum_errors + 1e-10;
        if full.sum_errors >= COR_BOUND || full.sum_errors.is_nan() || !direct_ok || !full.ledger.all_pass() {
            violations += 1;
        }
        worst = worst.max(full.sum_errors);
    }
    outcome(violations == 0, format!("{violations} violations over 25 seeds, worst total {worst:.4} < {COR_BOUND}"))
}

fn block_identity() -> Outcome {
    let mut worst_perm: f64 = 0.0;
    let mut worst_gauge: f64 = 0.0;
    let mut exact = true;
    for m in 2..=6usize {
        let (u, v, q) = random_almost_commuting_pair(m, 0.05, &mut rng(m as u64)).unwrap();
        let rev = reverse_dilate_pair(&u, &v, q, 8, 8, Some(3)).unwrap();
        worst_perm = worst_perm.max(rev.permutation_residual.unwrap_or(f64::INFINITY));
        let theta = &rev.step.theta;
        for b in &rev.blocks.blocks {
            let ell = b.ell as i64;
            exact &= b.lambda[0] == c64(1.0, 0.0);
            exact &= b.lambda[1] == theta.q_pow(1, 0, -ell);
            // Independent oracle: q[1][0] = conj(q).
            let oracle = q.conj().powi(-(ell as i32));
            worst_gauge = worst_gauge.max((b.lambda[1] - oracle).norm());
        }
    }
    let pass = worst_perm <= EXACT_TOL && exact && worst_gauge <= EXACT_TOL;
    outcome(pass, format!("permutation residual {worst_perm:.1e}, gauge exact {exact}, oracle gap {worst_gauge:.1e}"))
}

fn golden() -> PhaseMatrix {
    PhaseMatrix::irrational_pair("golden", (5f64.sqrt() - 1.0) / 2.0).unwrap()
}

fn torus_module() -> Outcome {
    let qi = PhaseMatrix::rational_upper(2, &[(1, 4)]).unwrap();
    let report = ergodicity_test(&qi).unwrap();
    // Brute force over a grid containing the deepest hole.
    let closure = subgroup_ball(&qi, 8).unwrap();
    let grid = 64;
    let mut brute: f64 = 0.0;
    for a in 0..grid {
        for b in 0..grid {
            let x = [a as f64 / grid as f64, b as f64 / grid as f64];
            let near = closure
                .points
                .iter()
                .map(|p| chord(circ(p[0], x[0])).max(chord(circ(p[1], x[1]))))
                .fold(f64::INFINITY, f64::min);
            brute = brute.max(near);
        }
    }
    let eta_q = report.eta_q.unwrap_or(f64::NAN);
    let expected = 2.0 * (PI / 8.0).sin();
    let eta_ok = (eta_q - brute).abs() <= ETA_Q_TOL && (eta_q - expected).abs() <= ETA_Q_TOL;

    let third = ergodicity_test(&PhaseMatrix::rational_upper(2, &[(1, 3)]).unwrap()).unwrap();
    let witness_ok = third.verdict == Verdict::NonErgodic
        && third.witness.as_ref().is_some_and(|w| w.iter().any(|&c| c != 0) && w.iter().all(|&c| c % 3 == 0));
    let irr_ok = ergodicity_test(&golden()).unwrap().verdict == Verdict::Ergodic;

    let thetas = [
        golden(),
        PhaseMatrix::irrational_pair("silver", 2f64.sqrt() - 1.0).unwrap(),
        PhaseMatrix::rational_upper(2, &[(5, 13)]).unwrap(),
        PhaseMatrix::rational_upper(3, &[(1, 5), (2, 7), (1, 3)]).unwrap(),
    ];
    let etas = [1.2, 0.9, 0.7, 0.55, 0.45];
    let mut instances = 0;
    let mut monotone = true;
    for q in &thetas {
        let mut prev = 0;
        for &eta in &etas {
            let n = find_n_eta(q, eta).unwrap().n_eta;
            monotone &= n >= prev;
            prev = n;
            instances += 1;
        }
    }
    let pass = eta_ok && witness_ok && irr_ok && monotone && instances == 20;
    outcome(
        pass,
        format!(
            "eta_q {eta_q:.9} brute {brute:.9}; 1/3 witness {:?}; irrational ergodic {irr_ok}; monotone over {instances} {monotone}",
            third.witness
        ),
    )
}

fn planner() -> Outcome {
    let thetas = [
        golden(),
        PhaseMatrix::irrational_pair("silver", 2f64.sqrt() - 1.0).unwrap(),
        PhaseMatrix::irrational_pair("e", std::f64::consts::E - 2.0).unwrap(),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for q in &thetas {
        let plan = eps_delta_plan(q, 2.0).unwrap();
        let claims = plan_claims(&plan).all_pass();
        // Independent path: re-certify the ball and its predecessor directly.
        let ball = subgroup_ball(q, plan.n_eta).unwrap();
        let cert = certify_density(&ball, plan.eta).unwrap();
        let below = certify_density(&subgroup_ball(q, plan.n_eta - 1).unwrap(), plan.eta).unwrap();
        let grid = hausdorff_to_torus(&ball, 1.0 / 256.0).unwrap();
        let recert = cert.is_some_and(|u| u < plan.eta && grid.lower <= u) && below.is_none();
        ok &= claims && plan.validate() && recert;
        notes.push(format!("N={} δ={:.3e} bound={:.3}", plan.n_eta, plan.delta, plan.bound));
    }
    outcome(ok, notes.join("; "))
}

fn single(m: ComplexMatrix) -> UnitaryTuple {
    UnitaryTuple::new(vec![m]).unwrap()
}

/// Compression onto the top `n` eigenvectors of `Re Σ conj(c_i) A_i`.
fn support_face(a: &UnitaryTuple, c: &[C64], n: usize) -> Vec<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(a.dim(), a.dim());
    for (ci, ai) in c.iter().zip(a.matrices()) {
        h = &h + &ai.scale(ci.conj());
    }
    let e = hermitian_eigen(&h.hermitian_part());
    let top: Vec<Vec<C64>> = (a.dim() - n..a.dim()).map(|k| e.eigenvector(k)).collect();
    let v = ComplexMatrix::from_columns(&top);
    a.matrices().iter().map(|m| &(&v.adjoint() * m) * &v).collect()
}

fn matrix_range() -> Outcome {
    let c5 = single(clock(5));
    let roots: Vec<C64> = (0..5).map(|k| cis_turns(k as f64 / 5.0)).collect();
    let hull_gap = dual_directions(1, 720)
        .iter()
        .map(|c| {
            let oracle = roots.iter().map(|p| (c[0].conj() * p).re).fold(f64::NEG_INFINITY, f64::max);
            (support_level1(&c5, c).unwrap() - oracle).abs()
        })
        .fold(0.0, f64::max);

    let mut unsound = 0;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut worst_residual: f64 = 0.0;
    for trial in 0..50u64 {
        let mut r = rng(5000 + trial);
        let a = random_unitary_tuple(2, 6, &mut r);
        if trial % 2 == 0 {
            let v = random_isometry(6, 2, &mut r);
            let x: Vec<ComplexMatrix> = a.matrices().iter().map(|m| &(&v.adjoint() * m) * &v).collect();
            let res = ucp_membership(&a, &x, MEMBERSHIP_TOL, MAX_ITER, trial).unwrap();
            unsound += usize::from(!res.is_sound(a.matrices(), &x, MEMBERSHIP_TOL));
            if res.status == MembershipStatus::Member && res.residual <= MEMBERSHIP_TOL {
                accepted += 1;
            }
            worst_residual = worst_residual.max(res.residual);
        } else {
            let c = &dual_directions(2, 16)[(trial / 2 % 16) as usize];
            let n = 1 + (trial / 2 % 2) as usize;
            let x: Vec<ComplexMatrix> =
                support_face(&a, c, n).iter().map(|m| m.scale_re(BOUNDARY_SCALE)).collect();
            let res = ucp_membership(&a, &x, MEMBERSHIP_TOL, MAX_ITER, trial).unwrap();
            unsound += usize::from(!res.is_sound(a.matrices(), &x, MEMBERSHIP_TOL));
            let cert_ok = res.certificate.as_ref().is_some_and(|cert| cert.verify(a.matrices(), &x));
            if res.status == MembershipStatus::NonMember && cert_ok {
                rejected += 1;
            }
        }
    }
    let pass = hull_gap <= HULL_TOL && accepted == 25 && rejected == 25 && unsound == 0;
    outcome(
        pass,
        format!(
            "hull gap {hull_gap:.1e}; accepted {accepted}/25 (worst residual {worst_residual:.1e}); rejected {rejected}/25; unsound {unsound}"
        ),
    )
}

fn cross_check() -> Outcome {
    let scalar = |z: C64| single(ComplexMatrix::scalar(1, z));
    // Closed forms: chord between two points, distance from -1 to the
    // triangle, distance from e^{iπ/5} to the pentagon edge.
    let instances = [
        (scalar(cis_turns(0.05)), scalar(cis_turns(0.3)), 2f64.sqrt()),
        (single(ComplexMatrix::from_diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)])), single(clock(3)), 0.5),
        (scalar(cis_turns(0.1)), single(clock(5)), 1.0 - (PI / 5.0).cos()),
    ];
    let mut worst: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut notes = Vec::new();
    for (i, (a, b, exact)) in instances.iter().enumerate() {
        let drd = drd_estimate(a, b).unwrap().value;
        let dmr = dmr_one_sided(a, b, a.dim(), 64, 17 + i as u64).unwrap();
        worst = worst.max((drd - dmr.upper).abs());
        worst_oracle = worst_oracle.max((drd - exact).abs()).max((dmr.upper - exact).abs());
        notes.push(format!("{drd:.6}/{:.6}", dmr.upper));
    }
    let pass = worst <= CROSS_TOL && worst_oracle <= CROSS_TOL;
    outcome(pass, format!("drd/dmr {}; worst gap {worst:.1e}; worst oracle gap {worst_oracle:.1e}", notes.join(", ")))
}

fn run_demo(config: &Path, out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_dlab"))
        .args(["demo-main2", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "7"])
        .env("DLAB_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success() || status.code() == Some(2));
    std::fs::read(out.join("demo-main2.json")).unwrap()
}

fn demo_main2() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("demo.json");
    std::fs::write(&config, r#"{"command": "demo-main2", "demo": {"n": 34, "gamma": "golden"}}"#).unwrap();
    let first = run_demo(&config, &dir.path().join("a"));
    let second = run_demo(&config, &dir.path().join("b"));
    let v: Value = serde_json::from_slice(&first).unwrap();
    let r = &v["result"];
    let ledger_pass = v["ledgerPass"] == Value::Bool(true);
    let plan = &r["plan"];
    let (n_eta, eta) = (plan["nEta"].as_f64().unwrap(), plan["eta"].as_f64().unwrap());
    let delta = r["delta"].as_f64().unwrap();
    let gauge = r["gauge"]["epsilon"].as_f64().unwrap();
    let formula = r["formula"].as_f64().unwrap();
    let gauge_ok = (gauge - (n_eta * delta + eta)).abs() <= EXACT_TOL;
    let formula_ok = (formula - 10.0 * (n_eta * delta + eta + delta.sqrt()).sqrt()).abs() <= EXACT_TOL;
    let pipe = &r["pipeline"];
    let sums_ok = pipe["sumForward"].as_f64().is_some() && pipe["sumForward"] == pipe["sumReverse"];
    let pass = ledger_pass && gauge_ok && formula_ok && sums_ok && first == second;
    outcome(
        pass,
        format!(
            "ledger {ledger_pass}; ε_gauge {gauge:.6}; formula {formula:.4}; identical rerun {}",
            first == second
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 weyl pair dilation exactness", Duration::from_secs(5), weyl_pair_exactness),
        ("2 pair bound ledger", Duration::from_secs(60), pair_bound_ledger),
        ("3 d=3 total compression ledger", Duration::from_secs(60), corollary_ledger),
        ("4 block identity and gauge points", Duration::from_secs(60), block_identity),
        ("5 torus module", Duration::from_secs(120), torus_module),
        ("6 planner inequalities", Duration::from_secs(120), planner),
        ("7 matrix range level 1", Duration::from_secs(240), matrix_range),
        ("8 drd vs dmr cross-check", Duration::from_secs(120), cross_check),
        ("9 end-to-end demo-main2", Duration::from_secs(120), demo_main2),
    ];
    let mut failed = Vec::new();
    for (name, budget, f) in criteria {
        let o = timed(budget, f);
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
