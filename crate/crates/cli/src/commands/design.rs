use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context as _};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use prism_baselines::diffopt::{diffopt_inverse, DiffOptConfig, InnerObjective};
use prism_baselines::SaConfig;
use prism_core::designer::DesignOutcome;
use prism_core::metrics::{score, EvalReport};
use prism_core::{MaterialDb, Simulator};
use prism_model::checkpoint::Checkpoint;
use prism_model::decode::DecodeConfig;

use crate::args::{DiffoptArgs, GlobalArgs, InferArgs, Mode, Objective, SaArgs};
use crate::io::{load_db, read_targets, require_file, simulator, write_designs, DesignRow, Target};
use crate::manifest::{in_dir, write_atomic, ManifestBuilder};
use crate::registry::{registry, Context};
use crate::{usage, Outcome};

pub const DESIGNS_FILE: &str = "designs.csv";
pub const EVAL_FILE: &str = "eval.csv";

/// Runs `design` on every target (in parallel, results in target order),
/// writes `designs.csv`, `eval.csv` and optional traces under `out`.
fn run_targets<F>(
    label: &str,
    targets: &[Target],
    out: &Path,
    db: &MaterialDb,
    sim: &Simulator,
    traces: bool,
    design: F,
) -> anyhow::Result<(Vec<DesignRow>, Outcome)>
where
    F: Fn(usize, &Target) -> prism_core::Result<DesignOutcome> + Sync,
{
    let results: Vec<_> = targets.par_iter().enumerate().map(|(i, t)| design(i, t)).collect();
    let mut rows = Vec::with_capacity(targets.len());
    let mut report = EvalReport {
        label: label.to_string(),
        records: Vec::new(),
        failures: Vec::new(),
    };
    for (i, (r, t)) in results.iter().zip(targets).enumerate() {
        match r.as_ref().map_err(|e| e.to_string()).and_then(|o| {
            let (_, mut rec) = score(&o.design, &t.spectrum, sim).map_err(|e| e.to_string())?;
            rec.index = i;
            Ok((o, rec))
        }) {
            Ok((o, rec)) => {
                rows.push(DesignRow {
                    index: i,
                    design: Some(o.design.clone()),
                    merit: Some(rec.mae),
                    error: None,
                });
                report.records.push(rec);
                if traces && !o.trace.is_empty() {
                    let mut text = String::from("step,merit\n");
                    for (k, m) in o.trace.iter().enumerate() {
                        let _ = writeln!(text, "{k},{m}");
                    }
                    write_atomic(&out.join("traces").join(format!("target_{i:05}.csv")), text.as_bytes())?;
                }
            }
            Err(msg) => {
                eprintln!("target {i}: {msg}");
                rows.push(DesignRow {
                    index: i,
                    design: None,
                    merit: None,
                    error: Some(msg.clone()),
                });
                report.failures.push((i, msg));
            }
        }
    }
    write_designs(&out.join(DESIGNS_FILE), &rows, db)?;
    write_atomic(&out.join(EVAL_FILE), report.to_csv().as_bytes())?;
    match report.aggregate() {
        Some(a) => say!(
            "{label}: {} targets, mean MAE {:.6}, R2 {:.4}, EMD {:.3} nm, {} failed",
            report.count(),
            a.mae,
            a.r2,
            a.emd,
            report.failures.len()
        ),
        None => say!("{label}: no successful targets, {} failed", report.failures.len()),
    }
    let failures = report.failures.len();
    Ok((rows, Outcome { failures }))
}

fn finish<C: Serialize>(command: &str, config: &C, hash: &str, seed: Option<u64>, targets: &Path, out: &Path) -> anyhow::Result<()> {
    let mut m = ManifestBuilder::new(command, config, hash)?.input(targets);
    if let Some(s) = seed {
        m = m.seed(command, s);
    }
    m.output(&out.join(DESIGNS_FILE));
    m.output(&out.join(EVAL_FILE));
    m.finish(&in_dir(out))?;
    Ok(())
}

pub fn infer(global: &GlobalArgs, args: &InferArgs) -> anyhow::Result<Outcome> {
    require_file(&args.checkpoint)?;
    let db = load_db(global)?;
    let hash = db.manifest_hash();
    let sim = Arc::new(simulator(&db)?);
    let targets = read_targets(&args.targets, &db, sim.grid())?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    if ck.manifest_hash != hash {
        bail!(
            "{}: checkpoint was trained with materials {}, current database is {hash}",
            args.checkpoint.display(),
            ck.manifest_hash
        );
    }
    let decode = DecodeConfig {
        max_layers: args.max_layers,
        beam_width: args.beam,
        include_greedy_in_pool: !args.no_greedy_pool,
        ..DecodeConfig::default()
    };
    decode.validate(&ck.model).map_err(|e| usage(e.to_string()))?;
    let model = ck.model.clone();
    let mut ctx = Context::new(sim.clone()).with_checkpoint(ck);
    ctx.decode = decode.clone();
    let name = match args.mode {
        Mode::Greedy => "prism-greedy",
        Mode::Beam => "prism-beam",
        Mode::Rerank => "prism-rerank",
    };
    let designer = registry().build(name, &ctx)?;
    let (_, outcome) = run_targets(name, &targets, &args.out, &db, &sim, false, |i, t| {
        designer.design(&t.spectrum, i)
    })?;
    finish("infer", &json!({"args": args, "model": model, "decode": decode}), &hash, None, &args.targets, &args.out)?;
    Ok(outcome)
}

pub fn sa_config(args: &SaArgs) -> SaConfig {
    SaConfig {
        restarts: args.restarts,
        steps_per_restart: ((args.steps as f64 * args.budget_scale).round() as usize).max(1),
        t_start: args.t_start,
        t_end: args.t_end,
        thickness_sigma: args.sigma,
        max_layers: args.max_layers,
        seed: args.seed,
        ..SaConfig::default()
    }
}

pub fn sa(global: &GlobalArgs, args: &SaArgs) -> anyhow::Result<Outcome> {
    let db = load_db(global)?;
    let sim = Arc::new(simulator(&db)?);
    let targets = read_targets(&args.targets, &db, sim.grid())?;
    let mut ctx = Context::new(sim.clone());
    ctx.sa = sa_config(args);
    ctx.sa.validate().map_err(|e| usage(e.to_string()))?;
    let designer = registry().build("sa", &ctx)?;
    let (_, outcome) = run_targets("sa", &targets, &args.out, &db, &sim, args.traces, |i, t| {
        designer.design(&t.spectrum, i)
    })?;
    finish("sa", &json!({"args": args, "sa": ctx.sa}), &db.manifest_hash(), Some(args.seed), &args.targets, &args.out)?;
    Ok(outcome)
}

pub fn diffopt(global: &GlobalArgs, args: &DiffoptArgs) -> anyhow::Result<Outcome> {
    let db = load_db(global)?;
    let sim = Arc::new(simulator(&db)?);
    let targets = read_targets(&args.targets, &db, sim.grid())?;
    let config = DiffOptConfig {
        restarts: args.restarts,
        layer_counts: args.layer_counts.clone(),
        iterations: args.iterations,
        objective: match args.objective {
            Objective::Mse => InnerObjective::Mse,
            Objective::Mae => InnerObjective::Mae,
        },
        seed: args.seed,
        ..DiffOptConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let outcome = if args.oracle_materials {
        if targets.iter().any(|t| t.design.is_none()) {
            return Err(usage("--oracle-materials needs a dataset file as --targets"));
        }
        run_targets("diffopt-oracle", &targets, &args.out, &db, &sim, args.traces, |i, t| {
            let materials = t.design.as_ref().map(|d| d.materials());
            let r = diffopt_inverse(&t.spectrum, &config, &sim, i, materials)?;
            Ok(DesignOutcome {
                trace: r.restarts.iter().map(|x| x.final_merit).collect(),
                design: r.design,
                merit: Some(r.merit),
            })
        })?
        .1
    } else {
        let mut ctx = Context::new(sim.clone());
        ctx.diffopt = config.clone();
        let designer = registry().build("diffopt", &ctx).context("building diffopt")?;
        run_targets("diffopt", &targets, &args.out, &db, &sim, args.traces, |i, t| {
            designer.design(&t.spectrum, i)
        })?
        .1
    };
    finish("diffopt", &json!({"args": args, "diffopt": config}), &db.manifest_hash(), Some(args.seed), &args.targets, &args.out)?;
    Ok(outcome)
}
