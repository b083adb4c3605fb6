use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use pcrf::experiment::{train_bundle, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::opts::{load_config, load_dataset, sibling, ForestArgs};
use crate::output::{run_manifest, InputRecord, Outputs};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Ignore image paths and train on landmarks only.
    pub geometric_only: bool,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Corpus manifest (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write; its run manifest goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Ignore image paths and train on landmarks only.
    #[arg(long)]
    pub geometric_only: bool,
}

pub fn resolve(args: &Args) -> Result<TrainOptions> {
    let mut opts: TrainOptions = load_config(args.config.as_deref())?;
    args.forest.apply(&mut opts.train)?;
    opts.geometric_only |= args.geometric_only;
    Ok(opts)
}

pub fn run(args: Args) -> Result<()> {
    let opts = resolve(&args)?;
    let mut ds = load_dataset(&args.data)?;
    super::maybe_attach_channels(&mut ds, &args.data, opts.geometric_only)?;
    let bundle = train_bundle(&ds, &opts.train).context("training")?;

    let mut out = Outputs::new();
    let model_path = out.file(&args.out);
    fs::write(&model_path, bundle.to_bytes()?)
        .with_context(|| format!("writing {}", model_path.display()))?;
    let mut manifest = run_manifest("train", &opts, vec![InputRecord::new("data", &args.data)?]);
    let models: Vec<&str> = bundle.available().into_iter().map(|k| k.name()).collect();
    manifest.summary = Some(json!({
        "models": models,
        "model_sha256": crate::output::fingerprint(&model_path)?,
        "frames": ds.frames.len(),
        "sequences": ds.sequences.len(),
        "subjects": ds.subjects.len(),
    }));
    out.write_json(sibling(&args.out, ".json"), &manifest)?;
    out.commit();
    println!("trained {} -> {}", models.join(", "), args.out.display());
    Ok(())
}
