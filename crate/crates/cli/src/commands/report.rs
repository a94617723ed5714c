use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::bail;
use rayon::prelude::*;

use prism_core::dataset::{generate_samples, SamplerConfig};
use prism_core::metrics::{score, EvalReport};
use prism_core::rng::{split_seed, VALID_SPLIT_TAG};
use prism_model::checkpoint::Checkpoint;
use prism_model::decode::DecodeConfig;

use crate::args::{EvalArgs, ExtrapolateArgs, GlobalArgs, Mode, PlotArgs};
use crate::io::{load_db, read_designs, read_targets, require_file, simulator};
use crate::manifest::{in_dir, sidecar, write_atomic, ManifestBuilder};
use crate::plot::{overlay_csv, overlay_svg};
use crate::registry::{registry, Context};
use crate::{usage, Outcome};

pub fn eval(global: &GlobalArgs, args: &EvalArgs) -> anyhow::Result<Outcome> {
    let db = load_db(global)?;
    let sim = simulator(&db)?;
    let targets = read_targets(&args.targets, &db, sim.grid())?;
    let rows = read_designs(&args.designs, &db)?;
    if rows.len() != targets.len() {
        bail!(
            "{} has {} designs but {} has {} targets",
            args.designs.display(),
            rows.len(),
            args.targets.display(),
            targets.len()
        );
    }
    let mut report = EvalReport {
        label: args.label.clone(),
        records: Vec::new(),
        failures: Vec::new(),
    };
    let scored: Vec<_> = rows
        .par_iter()
        .map(|r| match (&r.design, r.index < targets.len()) {
            (_, false) => Err(format!("index {} out of range", r.index)),
            (Some(d), true) => score(d, &targets[r.index].spectrum, &sim).map_err(|e| e.to_string()),
            (None, true) => Err(r.error.clone().unwrap_or_else(|| "no design".into())),
        })
        .collect();
    for (r, s) in rows.iter().zip(scored) {
        match s {
            Ok((_, mut rec)) => {
                rec.index = r.index;
                report.records.push(rec);
            }
            Err(msg) => report.failures.push((r.index, msg)),
        }
    }
    write_atomic(&args.out, report.to_csv().as_bytes())?;
    let mut m = ManifestBuilder::new("eval", args, &db.manifest_hash())?
        .input(&args.designs)
        .input(&args.targets);
    m.output(&args.out);
    m.finish(&sidecar(&args.out))?;
    if let Some(a) = report.aggregate() {
        say!("{}: {} scored, mean MAE {:.6}, R2 {:.4}, EMD {:.3} nm", args.label, report.count(), a.mae, a.r2, a.emd);
    }
    Ok(Outcome {
        failures: report.failures.len(),
    })
}

pub fn plot(global: &GlobalArgs, args: &PlotArgs) -> anyhow::Result<Outcome> {
    let db = load_db(global)?;
    let sim = simulator(&db)?;
    let targets = read_targets(&args.targets, &db, sim.grid())?;
    let rows = read_designs(&args.designs, &db)?;
    let limit = args.limit.unwrap_or(usize::MAX);
    let mut m = ManifestBuilder::new("plot", args, &db.manifest_hash())?
        .input(&args.designs)
        .input(&args.targets);
    let mut failures = 0;
    for r in rows.iter().take(limit) {
        let Some(target) = targets.get(r.index) else {
            bail!("{}: index {} out of range", args.designs.display(), r.index);
        };
        let Some(design) = &r.design else {
            eprintln!("target {}: no design", r.index);
            failures += 1;
            continue;
        };
        let predicted = sim.simulate(design)?;
        let stem = args.out.join(format!("target_{:04}", r.index));
        let title = format!("target {} ({} layers)", r.index, design.len());
        let svg = stem.with_extension("svg");
        let csv = stem.with_extension("csv");
        write_atomic(&svg, overlay_svg(&title, sim.grid(), &target.spectrum, &predicted).as_bytes())?;
        write_atomic(&csv, overlay_csv(sim.grid(), &target.spectrum, &predicted).as_bytes())?;
        m.output(&svg);
        m.output(&csv);
    }
    m.finish(&in_dir(&args.out))?;
    say!("{}", args.out.display());
    Ok(Outcome { failures })
}

fn parse_bucket(s: &str) -> anyhow::Result<(usize, usize)> {
    let bad = || usage(format!("bad bucket {s:?}; expected LO-HI"));
    let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn extrapolate(global: &GlobalArgs, args: &ExtrapolateArgs) -> anyhow::Result<Outcome> {
    require_file(&args.checkpoint)?;
    let buckets = args.buckets.iter().map(|b| parse_bucket(b)).collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(&(_, hi)) = buckets.iter().find(|b| b.1 > args.max_layers) {
        return Err(usage(format!("bucket up to {hi} layers exceeds --max-layers {}", args.max_layers)));
    }
    if args.per_bucket == 0 {
        return Err(usage("--per-bucket must be at least 1"));
    }
    let db = load_db(global)?;
    let hash = db.manifest_hash();
    let sim = Arc::new(simulator(&db)?);
    let ck = Checkpoint::load(&args.checkpoint)?;
    if ck.manifest_hash != hash {
        bail!("{}: checkpoint materials {} do not match the database ({hash})", args.checkpoint.display(), ck.manifest_hash);
    }
    let decode = DecodeConfig {
        max_layers: args.max_layers,
        beam_width: args.beam,
        ..DecodeConfig::default()
    };
    decode.validate(&ck.model).map_err(|e| usage(e.to_string()))?;
    let mut ctx = Context::new(sim.clone()).with_checkpoint(ck);
    ctx.decode = decode;
    let name = match args.mode {
        Mode::Greedy => "prism-greedy",
        Mode::Beam => "prism-beam",
        Mode::Rerank => "prism-rerank",
    };
    let designer = registry().build(name, &ctx)?;
    let base = split_seed(args.seed, VALID_SPLIT_TAG);

    let mut report = String::from(
        "# length extrapolation: decoded designs re-simulated against targets from longer stacks\n\
         # qualitative artifact only; there is no pass threshold on degradation\n\
         bucket,min_layers,max_layers,count,failures,mae,r2,emd_nm,mean_true_layers,mean_pred_layers\n",
    );
    let mut records = String::from("bucket,index,true_layers,pred_layers,mae,r2,emd_nm,error\n");
    let mut total_failures = 0;
    for (b, &(lo, hi)) in buckets.iter().enumerate() {
        let sampler = SamplerConfig {
            min_layers: lo,
            max_layers: hi,
            seed: base.wrapping_add(b as u64),
            ..SamplerConfig::default()
        };
        let (samples, _) = generate_samples(args.per_bucket, &sampler, &sim)?;
        let results: Vec<_> = samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let o = designer.design(&s.spectrum, i)?;
                let (_, rec) = score(&o.design, &s.spectrum, &sim)?;
                Ok::<_, prism_core::Error>((o.design.len(), rec))
            })
            .collect();
        let label = format!("{lo}-{hi}");
        let mut ev = EvalReport {
            label: label.clone(),
            records: Vec::new(),
            failures: Vec::new(),
        };
        let mut pred_layers = 0usize;
        for (i, (s, r)) in samples.iter().zip(results).enumerate() {
            match r {
                Ok((n, mut rec)) => {
                    rec.index = i;
                    let _ = writeln!(records, "{label},{i},{},{n},{},{},{},", s.design.len(), rec.mae, rec.r2, rec.emd);
                    pred_layers += n;
                    ev.records.push(rec);
                }
                Err(e) => {
                    let msg = e.to_string().replace([',', '\n'], " ");
                    let _ = writeln!(records, "{label},{i},{},,,,,{msg}", s.design.len());
                    ev.failures.push((i, msg));
                }
            }
        }
        let true_layers = samples.iter().map(|s| s.design.len()).sum::<usize>() as f64 / samples.len() as f64;
        total_failures += ev.failures.len();
        match ev.aggregate() {
            Some(a) => {
                let pred = pred_layers as f64 / ev.count() as f64;
                let _ = writeln!(
                    report,
                    "{label},{lo},{hi},{},{},{},{},{},{true_layers},{pred}",
                    ev.count(),
                    ev.failures.len(),
                    a.mae,
                    a.r2,
                    a.emd
                );
                say!("{label}: mean MAE {:.6}, R2 {:.4}, {} failed", a.mae, a.r2, ev.failures.len());
            }
            None => {
                let _ = writeln!(report, "{label},{lo},{hi},0,{},,,,{true_layers},", ev.failures.len());
            }
        }
    }
    let report_path = args.out.join("report.csv");
    let records_path = args.out.join("records.csv");
    write_atomic(&report_path, report.as_bytes())?;
    write_atomic(&records_path, records.as_bytes())?;
    let mut m = ManifestBuilder::new("extrapolate", args, &hash)?
        .seed("extrapolate", args.seed)
        .input(&args.checkpoint);
    m.output(&report_path);
    m.output(&records_path);
    m.finish(&in_dir(&args.out))?;
    Ok(Outcome {
        failures: total_failures,
    })
}
