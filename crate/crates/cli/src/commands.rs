//! Subcommand drivers: each returns a [`Report`] with its ledgers.

use anyhow::{anyhow, bail, Result};
use clap::ValueEnum;
use dlab_core::mrange::{
    drd_estimate, dmr_one_sided, dual_directions, support_level1, ucp_membership, w1_hausdorff,
    CERTIFICATE_RESTARTS, MAX_ITER, MEMBERSHIP_TOL,
};
use dlab_core::numerics::random::random_isometry;
use dlab_core::numerics::{cis_turns, io::complex_pair};
use dlab_core::reverse::UtagPipeline;
use dlab_core::torus::{
    almost_gauge_certificate, eps_delta_plan, ergodicity_test, find_n_eta, hausdorff_to_torus, subgroup_ball,
};
use dlab_core::tuples::{clock_pow, commutation_defect, shift, weyl_tuple};
use dlab_core::{
    dilate_full, utag_pipeline, Claim, EpsDeltaPlan, Ledger, PhaseEntry, PhaseMatrix, Truncation,
    UnitaryTuple,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{named_irrational, DemoConfig, DemoPair, ExperimentConfig, MrangeConfig, TargetSource};
use crate::output::{Report, SeededLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Dilate,
    Reverse,
    Torus,
    Mrange,
    #[value(name = "demo-main2")]
    DemoMain2,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dilate => "dilate",
            Self::Reverse => "reverse",
            Self::Torus => "torus",
            Self::Mrange => "mrange",
            Self::DemoMain2 => "demo-main2",
        }
    }
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// Thread pool capped by `DLAB_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("DLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("DLAB_THREADS must be a positive integer, got {v:?}"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig, opts: RunOptions) -> Result<Report> {
    if let Some(name) = &cfg.command {
        if name != cmd.name() {
            bail!("config is for command {name:?} but {:?} was requested", cmd.name());
        }
    }
    let pool = thread_pool()?;
    let (result, ledgers) = match cmd {
        Command::Dilate => pool.install(|| dilate(cfg, opts))?,
        Command::Reverse => pool.install(|| reverse(cfg, opts))?,
        Command::Torus => torus(cfg)?,
        Command::Mrange => mrange(cfg, opts)?,
        Command::DemoMain2 => {
            let (v, l) = demo_main2(&cfg.demo.clone().unwrap_or_default())?;
            (v, vec![SeededLedger { seed: None, ledger: l }])
        }
    };
    let pass = ledgers.iter().all(|l| l.ledger.all_pass());
    let json = json!({
        "command": cmd.name(),
        "config": cfg,
        "seed": seed(cfg, opts),
        "tolerance": opts.tol.or(cfg.tolerance),
        "result": result,
        "ledgerPass": pass,
    });
    Ok(Report { command: cmd.name(), json, ledgers })
}

fn seed(cfg: &ExperimentConfig, opts: RunOptions) -> u64 {
    opts.seed.or(cfg.seed).unwrap_or(0)
}

/// Seeds to sweep: the command-line seed alone, else the config's list.
fn sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Vec<u64> {
    match (opts.seed, &cfg.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) if !list.is_empty() => list.clone(),
        _ => vec![seed(cfg, opts)],
    }
}

fn seeded_runs<T: Send>(
    cfg: &ExperimentConfig,
    opts: RunOptions,
    run: impl Fn(&UnitaryTuple) -> Result<T> + Sync,
) -> Result<Vec<(Option<u64>, T)>> {
    let theta = cfg.theta()?;
    let source = cfg.tuple_source()?;
    let seeds: Vec<Option<u64>> =
        if source.is_seeded() { sweep(cfg, opts).into_iter().map(Some).collect() } else { vec![None] };
    seeds
        .par_iter()
        .map(|&s| {
            let u = source.build(Some(&theta), s.unwrap_or(0))?;
            Ok((s, run(&u)?))
        })
        .collect()
}

fn dilate(cfg: &ExperimentConfig, opts: RunOptions) -> Result<(Value, Vec<SeededLedger>)> {
    let theta = cfg.theta()?;
    let trunc = cfg.truncation();
    let runs = seeded_runs(cfg, opts, |u| Ok(dilate_full(u, &theta, trunc)?.certificate()))?;
    let json = runs.iter().map(|(s, c)| json!({ "seed": s, "certificate": c })).collect::<Vec<_>>();
    let ledgers = runs.into_iter().map(|(seed, c)| SeededLedger { seed, ledger: c.ledger }).collect();
    Ok((json!({ "runs": json }), ledgers))
}

fn reverse(cfg: &ExperimentConfig, opts: RunOptions) -> Result<(Value, Vec<SeededLedger>)> {
    let theta = cfg.theta()?;
    let trunc = cfg.truncation();
    let runs = seeded_runs(cfg, opts, |u| {
        let p = utag_pipeline(u, &theta, trunc)?;
        Ok((pipeline_summary(&p), p.ledger))
    })?;
    let json = runs.iter().map(|(s, (v, _))| json!({ "seed": s, "pipeline": v })).collect::<Vec<_>>();
    let ledgers = runs.into_iter().map(|(seed, (_, ledger))| SeededLedger { seed, ledger }).collect();
    Ok((json!({ "runs": json }), ledgers))
}

fn pipeline_summary(p: &UtagPipeline) -> Value {
    let steps: Vec<Value> = p
        .reverse
        .iter()
        .map(|r| {
            json!({
                "m": r.step.m,
                "ring": r.step.ring(),
                "errors": r.errors,
                "diagonalDefects": r.diagonal_defects,
                "gaugeDeviation": r.gauge_deviation,
                "permutationResidual": r.permutation_residual,
                "blockDefect": r.block_defect,
                "blocks": r.blocks,
            })
        })
        .collect();
    json!({
        "dilation": p.full.certificate(),
        "reverseSteps": steps,
        "lambda": p.lambda,
        "sumForward": p.sum_forward,
        "sumReverse": p.sum_reverse,
    })
}

/// The three planner inequalities, recomputed from the plan's fields.
pub fn plan_claims(plan: &EpsDeltaPlan) -> Ledger {
    let budget = plan.epsilon * plan.epsilon / 200.0;
    let root = ((plan.d - 1) as f64) * plan.delta.sqrt();
    let spend = plan.n_eta as f64 * plan.delta + root;
    let bound = 10.0 * (spend + plan.eta).sqrt();
    let mut l = Ledger::new();
    l.push(Claim::strictly_below("plan.eta < eps^2/200", budget, plan.eta));
    l.push(Claim::strictly_below("plan.n_eta*delta + (d-1)*sqrt(delta) < eps^2/200", budget, spend));
    l.push(Claim::strictly_below("plan.10*sqrt(n_eta*delta + eta + (d-1)*sqrt(delta)) < eps", plan.epsilon, bound));
    l.push(Claim::strictly_below("plan.hausdorff_upper < eta", plan.eta, plan.hausdorff_upper));
    l.measure("plan.n_eta", plan.n_eta as f64);
    l.measure("plan.delta", plan.delta);
    l
}

fn torus(cfg: &ExperimentConfig) -> Result<(Value, Vec<SeededLedger>)> {
    let theta = cfg.theta()?;
    let tc = cfg.torus.clone().unwrap_or_default();
    let report = ergodicity_test(&theta)?;
    let mut ledger = Ledger::new();
    let mut result = json!({ "ergodicity": report });
    if let Some(eta) = tc.eta {
        let ne = find_n_eta(&theta, eta)?;
        ledger.push(Claim::strictly_below("torus.hausdorff_upper < eta", eta, ne.hausdorff_upper));
        ledger.measure("torus.n_eta", ne.n_eta as f64);
        result["nEta"] = json!(ne);
    }
    if let Some(eps) = tc.epsilon {
        let plan = eps_delta_plan(&theta, eps.min(2.0))?;
        ledger.extend(&plan_claims(&plan));
        result["plan"] = json!(plan);
        result["planValidated"] = json!(plan.validate());
        result["trivialEpsilon"] = json!(eps > 2.0);
    }
    if let Some(n) = tc.ball {
        let cloud = subgroup_ball(&theta, n)?;
        let h = hausdorff_to_torus(&cloud, tc.grid_step.unwrap_or(1.0 / 256.0))?;
        ledger.push(Claim::at_most("torus.grid_lower <= grid_upper", h.upper, h.lower));
        result["ball"] = json!({ "wordLength": n, "points": cloud.len(), "hausdorff": h });
    }
    Ok((result, vec![SeededLedger { seed: None, ledger }]))
}

fn mrange(cfg: &ExperimentConfig, opts: RunOptions) -> Result<(Value, Vec<SeededLedger>)> {
    let probe = cfg.mrange.as_ref().ok_or_else(|| anyhow!("config needs an \"mrange\" entry"))?;
    let theta = cfg.theta.as_ref().map(|_| cfg.theta()).transpose()?;
    let seed = seed(cfg, opts);
    let tol = opts.tol.or(cfg.tolerance).unwrap_or(MEMBERSHIP_TOL);
    let a = cfg.tuple_source()?.build(theta.as_ref(), seed)?;
    let mut ledger = Ledger::new();
    let norm = "max over generators of the operator norm";
    let result = match probe {
        MrangeConfig::Support { directions } => {
            let values = dual_directions(a.d(), *directions)
                .into_iter()
                .map(|c| {
                    let h = support_level1(&a, &c)?;
                    let dir: Vec<_> = c.iter().map(|&z| complex_pair(z)).collect();
                    Ok(json!({ "direction": dir, "value": h }))
                })
                .collect::<Result<Vec<_>>>()?;
            json!({ "level": 1, "support": values, "samplingMeta": { "directions": directions } })
        }
        MrangeConfig::W1 { other, directions } => {
            let b = other.build(theta.as_ref(), seed)?;
            let w = w1_hausdorff(&a, &b, *directions)?;
            json!({
                "level": 1,
                "estimate": w.estimate,
                "upper": w.upper(),
                "samplingMeta": { "directions": w.directions, "resolution": w.resolution, "norm": norm },
            })
        }
        MrangeConfig::Membership { target, max_iter } => {
            let x = match target {
                TargetSource::Compression { level, scale } => {
                    if *level == 0 || *level > a.dim() {
                        bail!("compression level {level} must lie in 1..={}", a.dim());
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let v = random_isometry(a.dim(), *level, &mut rng);
                    a.matrices().iter().map(|m| (&(&v.adjoint() * m) * &v).scale_re(*scale)).collect()
                }
                TargetSource::Matrices { matrices } => matrices.clone(),
            };
            let max_iter = max_iter.unwrap_or(MAX_ITER);
            let r = ucp_membership(&a, &x, tol, max_iter, seed)?;
            let sound = r.is_sound(a.matrices(), &x, tol);
            ledger.push(Claim::at_most("membership.verdict_sound", 0.0, if sound { 0.0 } else { 1.0 }));
            ledger.measure("membership.residual", r.residual);
            json!({
                "level": r.level,
                "status": r.status,
                "residual": r.residual,
                "certificate": r.certificate,
                "samplingMeta": {
                    "seed": seed,
                    "tolerance": tol,
                    "maxIter": max_iter,
                    "iterations": r.iterations,
                    "restarts": CERTIFICATE_RESTARTS,
                    "norm": norm,
                },
                "choi": r.choi,
            })
        }
        MrangeConfig::Dmr { other, level, samples } => {
            let b = other.build(theta.as_ref(), seed)?;
            let e = dmr_one_sided(&a, &b, *level, *samples, seed)?;
            ledger.push(Claim::at_most("dmr.lower <= upper", e.upper, e.lower));
            json!({ "level": level, "lower": e.lower, "upper": e.upper, "samplingMeta": e.sampling })
        }
        MrangeConfig::Drd { other } => {
            let b = other.build(theta.as_ref(), seed)?;
            let fit = drd_estimate(&a, &b)?;
            let ucp = fit.choi.is_ucp(1e-9);
            ledger.push(Claim::at_most("drd.map_is_ucp", 0.0, if ucp { 0.0 } else { 1.0 }));
            json!({ "level": a.dim(), "value": fit.value, "choi": fit.choi, "samplingMeta": { "norm": norm } })
        }
    };
    Ok((result, vec![SeededLedger { seed: Some(seed), ledger }]))
}

/// Exactly `r`-commuting pair measured against an irrational target `q`.
pub fn demo_main2(dc: &DemoConfig) -> Result<(Value, Ledger)> {
    let gamma = dc
        .gamma_approx
        .or_else(|| named_irrational(&dc.gamma))
        .ok_or_else(|| anyhow!("unknown irrational tag {:?}; supply \"gammaApprox\"", dc.gamma))?;
    let n = dc.n;
    if !(2..=64).contains(&n) {
        bail!("demo needs 2 <= n <= 64, got {n}");
    }
    if !(dc.epsilon > 0.0) {
        bail!("ε must be positive, got {}", dc.epsilon);
    }
    let p = ((gamma * n as f64).round() as i64).rem_euclid(n as i64);
    let forward = PhaseMatrix::rational_upper(2, &[(p, n as i64)])?;
    let backward = PhaseMatrix::rational_upper(2, &[(-p, n as i64)])?;
    let u = match dc.pair {
        DemoPair::Weyl => weyl_tuple(&forward)?,
        DemoPair::ShiftDiagonal => UnitaryTuple::new(vec![shift(n), clock_pow(n, p)])?,
    };
    let coef = if commutation_defect(&u, &forward)?.max() <= commutation_defect(&u, &backward)?.max() { 1 } else { -1 };
    let entry = PhaseEntry::irrational(dc.gamma.clone());
    let entry = if coef == 1 { entry } else { entry.negate() };
    let target = PhaseMatrix::pair(entry, [(dc.gamma.clone(), gamma)].into_iter().collect())?;

    let mut ledger = Ledger::new();
    let delta = commutation_defect(&u, &target)?.max();
    let gap = (cis_turns(coef as f64 * gamma) - cis_turns(coef as f64 * p as f64 / n as f64)).norm();
    ledger.push(Claim::at_most("main2.defect equals |q - r|", 1e-12, (delta - gap).abs()));

    let plan = eps_delta_plan(&target, dc.epsilon.min(2.0))?;
    ledger.extend(&plan_claims(&plan));

    let trunc = Truncation { ring: Some(dc.ring.unwrap_or(n)), window: dc.window };
    let pipeline = utag_pipeline(&u, &target, trunc)?;
    ledger.extend(&pipeline.ledger);
    let recomputed: f64 = pipeline.full.steps.iter().map(|s| s.error()).sum();
    ledger.push(Claim::at_most("main2.sum_errors recomputed", 1e-12, (recomputed - pipeline.sum_forward).abs()));

    let gauge = almost_gauge_certificate(delta, plan.eta, plan.n_eta)?;
    let spend = plan.n_eta as f64 * delta + plan.eta;
    ledger.push(Claim::at_most("main2.gauge_epsilon = n_eta*delta + eta", 1e-12, (gauge.epsilon - spend).abs()));
    let d = 2.0;
    let formula = 10.0 * (spend + (d - 1.0) * delta.sqrt()).sqrt();
    ledger.measure("main2.delta", delta);
    ledger.measure("main2.delta_budget", plan.delta);
    ledger.measure("main2.gauge_epsilon", gauge.epsilon);
    ledger.measure("main2.formula", formula);

    let target_approx: Vec<_> = complex_pair(cis_turns(coef as f64 * gamma)).into_iter().collect();
    let r: Vec<_> = complex_pair(cis_turns(coef as f64 * p as f64 / n as f64)).into_iter().collect();
    let json = json!({
        "pair": {
            "shape": dc.pair,
            "n": n,
            "p": p,
            "r": r,
            "target": { "tag": dc.gamma, "approx": gamma, "orientation": coef, "q": target_approx },
            "input": dim_of(&u),
        },
        "delta": delta,
        "deltaWithinPlan": delta <= plan.delta,
        "plan": plan,
        "planValidated": plan.validate(),
        "trivialEpsilon": dc.epsilon > 2.0,
        "pipeline": pipeline_summary(&pipeline),
        "gauge": gauge,
        "formula": formula,
        "ledger": ledger,
    });
    Ok((json, ledger))
}

fn dim_of(u: &UnitaryTuple) -> Value {
    json!({ "d": u.d(), "dim": u.dim() })
}
