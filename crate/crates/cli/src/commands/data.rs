use serde_json::json;
use prism_core::dataset::{generate_dataset, SamplerConfig};
use prism_core::rng::{split_seed, DEV_SPLIT_TAG, TRAIN_SPLIT_TAG, VALID_SPLIT_TAG};

use crate::args::{GenDataArgs, GlobalArgs, MaterialsArgs, Split};
use crate::io::{load_db, simulator};
use crate::manifest::{in_dir, sidecar, ManifestBuilder};
use crate::{usage, Outcome};

pub fn materials(global: &GlobalArgs, args: &MaterialsArgs) -> anyhow::Result<Outcome> {
    let db = load_db(global)?;
    db.save(&args.out)?;
    let mut m = ManifestBuilder::new("materials", args, &db.manifest_hash())?;
    m.output(&args.out);
    m.finish(&in_dir(&args.out))?;
    say!("wrote {} materials to {}", db.tables().len(), args.out.display());
    Ok(Outcome::default())
}

pub fn gen_data(global: &GlobalArgs, args: &GenDataArgs) -> anyhow::Result<Outcome> {
    let tag = match args.split {
        Split::Train => TRAIN_SPLIT_TAG,
        Split::Dev => DEV_SPLIT_TAG,
        Split::Valid => VALID_SPLIT_TAG,
    };
    let config = SamplerConfig {
        min_layers: args.min_layers,
        max_layers: args.max_layers,
        seed: split_seed(args.seed, tag),
        ..SamplerConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let db = load_db(global)?;
    let sim = simulator(&db)?;
    let hash = db.manifest_hash();
    let summary = generate_dataset(args.n, &config, &sim, &hash, &args.out)?;
    let mut m = ManifestBuilder::new("gen-data", &json!({"args": args, "sampler": config}), &hash)?.seed("sampler", config.seed);
    m.output(&args.out);
    m.finish(&sidecar(&args.out))?;
    say!(
        "wrote {} samples to {} ({} simulation retries)",
        summary.count,
        args.out.display(),
        summary.failures
    );
    Ok(Outcome::default())
}
