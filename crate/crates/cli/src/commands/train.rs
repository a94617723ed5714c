use std::fs;
use std::path::Path;

use anyhow::{bail, Context as _};
use serde_json::json;

use prism_core::dataset::read_all;
use prism_model::checkpoint::Checkpoint;
use prism_model::train::{write_trace, TraceRow, TrainConfig, Trainer};
use prism_model::{ModelConfig, ModelParams};

use crate::args::{GlobalArgs, TrainArgs};
use crate::io::{load_db, require_file};
use crate::manifest::{in_dir, ManifestBuilder};
use crate::{usage, Outcome};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRACE_FILE: &str = "trace.csv";

fn train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut c = match &args.config {
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.steps {
        c.steps = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.lr {
        c.lr_max = v;
    }
    if let Some(v) = args.lr_min {
        c.lr_min = v;
    }
    if let Some(v) = args.warmup {
        c.warmup_steps = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

/// Rows of an existing trace file before `step`, so a resumed run extends
/// the trace without gaps or duplicates.
fn earlier_rows(path: &Path, step: usize) -> anyhow::Result<Vec<TraceRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format!("{} line {}", path.display(), i + 1);
        if f.len() != 5 {
            bail!("{}: expected 5 columns", bad());
        }
        let row = TraceRow {
            step: f[0].parse().with_context(bad)?,
            lr: f[1].parse().with_context(bad)?,
            mat_loss: f[2].parse().with_context(bad)?,
            thk_loss: f[3].parse().with_context(bad)?,
            total: f[4].parse().with_context(bad)?,
        };
        if row.step < step {
            rows.push(row);
        }
    }
    if rows.len() != step {
        bail!("{} has {} rows before step {step}; cannot resume the trace", path.display(), rows.len());
    }
    Ok(rows)
}

pub fn train(global: &GlobalArgs, args: &TrainArgs) -> anyhow::Result<Outcome> {
    require_file(&args.data)?;
    let db = load_db(global)?;
    let hash = db.manifest_hash();
    let (header, data) = read_all(&args.data)?;
    if header.manifest_hash != hash {
        bail!(
            "{}: dataset materials {} do not match the database ({hash})",
            args.data.display(),
            header.manifest_hash
        );
    }
    let ck_dir = args.out.join(CHECKPOINT_DIR);
    let trace_path = args.out.join(TRACE_FILE);
    let mut trainer = match &args.resume {
        Some(dir) => {
            require_file(dir)?;
            let mut ck = Checkpoint::load(dir)?;
            if ck.manifest_hash != hash {
                bail!("{}: checkpoint materials {} do not match the database ({hash})", dir.display(), ck.manifest_hash);
            }
            if let Some(steps) = args.steps {
                ck.train.steps = steps;
            }
            let step = ck.step;
            let mut t = Trainer::from_checkpoint(ck)?;
            t.trace = earlier_rows(&trace_path, step)?;
            t
        }
        None => {
            let mut model = ModelConfig::preset(&args.preset)
                .ok_or_else(|| usage(format!("unknown preset {:?} (desk, prism-13m, prism-44m)", args.preset)))?;
            if let Some(p) = args.dropout {
                model.dropout = p;
            }
            let train = train_config(args)?;
            let params = ModelParams::new(&model, train.seed)?;
            Trainer::new(model, train, params).map_err(|e| usage(e.to_string()))?
        }
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let every = args.checkpoint_every;
    let result = trainer.run(&data, |t, row| {
        if every > 0 && (row.step + 1) % every == 0 && !t.done() {
            t.save_checkpoint(&ck_dir, &hash)?;
            write_trace(&trace_path, &t.trace)?;
        }
        Ok(())
    });
    write_trace(&trace_path, &trainer.trace)?;
    result?;
    trainer.save_checkpoint(&ck_dir, &hash)?;
    let mut m = ManifestBuilder::new("train", &json!({"args": args, "model": trainer.model, "train": trainer.train}), &hash)?
        .seed("train", trainer.train.seed)
        .input(&args.data);
    m.output(&ck_dir);
    m.output(&trace_path);
    m.finish(&in_dir(&args.out))?;
    if let Some(last) = trainer.trace.last() {
        say!("step {} loss {:.6}", last.step + 1, last.total);
    }
    say!("{}", ck_dir.display());
    Ok(Outcome::default())
}
