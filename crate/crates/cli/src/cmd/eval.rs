use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use pcrf::channels::{build_channels, load_pgm};
use pcrf::eval::{evaluate_with, outcome_metrics, EvalConfig, SequenceOutcome};
use pcrf::frame::{Dataset, LandmarkFrame};
use pcrf::inference::{write_trace_header, write_trace_rows, ModelKind, WindowConfig};
use pcrf::model::ModelBundle;
use serde::{Deserialize, Serialize};

use crate::errors::Usage;
use crate::opts::{load_config, load_dataset, model_kind, WindowArgs};
use crate::output::{run_manifest, InputRecord, Outputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub model: ModelKind,
    /// Trees per pair; `None` uses the model's forest size.
    pub trees: Option<usize>,
    pub seed: u64,
    /// Temporal window; `None` uses the one stored with the model.
    pub window: Option<WindowConfig>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            model: ModelKind::Pcrf,
            trees: None,
            seed: 0,
            window: None,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Corpus manifest (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Model bundle written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Model to run: rf, full, pcrf, mvrf or mvpcrf.
    #[arg(long)]
    pub kind: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON evaluation settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trees per pair.
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub window: WindowArgs,
}

/// Per-label F1 keyed by label name, `null` where undefined.
#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    model: &'a str,
    sequences: usize,
    accuracy: f64,
    macro_f1: f64,
    f1: BTreeMap<&'a str, Option<f64>>,
    labels: &'a [String],
    confusion: &'a [Vec<usize>],
}

fn with_channels<'f>(
    frames: &'f [LandmarkFrame],
    root: &Path,
) -> pcrf::Result<Cow<'f, [LandmarkFrame]>> {
    let mut owned = frames.to_vec();
    for f in owned.iter_mut() {
        if let Some(rel) = &f.image {
            f.channels = Some(Arc::new(build_channels(&load_pgm(&root.join(rel))?)?));
        }
    }
    Ok(Cow::Owned(owned))
}

pub fn run(args: Args) -> Result<()> {
    let mut opts: EvalOptions = load_config(args.config.as_deref())?;
    if let Some(k) = &args.kind {
        opts.model = model_kind(k)?;
    }
    if let Some(t) = args.trees {
        opts.trees = Some(t);
    }
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    let bundle = ModelBundle::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let mut window = opts.window.unwrap_or(bundle.window);
    args.window.apply(&mut window)?;
    opts.window = Some(window);
    let model = bundle.model(opts.model).map_err(|e| Usage(e.to_string()))?;
    let ds = load_dataset(&args.data)?;
    if ds.labels != bundle.labels {
        return Err(Usage("corpus and model label sets differ".into()).into());
    }

    let appearance = bundle.uses_appearance();
    if appearance && ds.frames.iter().any(|f| f.image.is_none()) {
        return Err(
            Usage("the model uses image features but some frames have no image".into()).into(),
        );
    }
    let root = args.data.parent().unwrap_or(Path::new(".")).to_path_buf();
    let cfg = EvalConfig {
        window,
        trees: opts.trees,
        seed: opts.seed,
    };
    let outcomes = evaluate_with(model, &ds, &cfg, |frames| {
        if appearance {
            with_channels(frames, &root)
        } else {
            Ok(Cow::Borrowed(frames))
        }
    })?;
    let metrics = outcome_metrics(&outcomes, ds.labels.len());

    let mut out = Outputs::new();
    out.dir(&args.out)?;
    write_sequences(&mut out, &args.out.join("sequences.csv"), &ds, &outcomes)?;
    write_traces(
        &mut out,
        &args.out.join("traces.csv"),
        &ds,
        opts.model,
        &outcomes,
    )?;
    let names = &ds.labels.names;
    let f1 = names
        .iter()
        .map(String::as_str)
        .zip(metrics.f1.iter().copied())
        .collect();
    out.write_json(
        args.out.join("metrics.json"),
        &MetricsFile {
            model: opts.model.name(),
            sequences: metrics.sequences,
            accuracy: metrics.accuracy,
            macro_f1: metrics.macro_f1,
            f1,
            labels: names,
            confusion: &metrics.confusion,
        },
    )?;
    let inputs = vec![
        InputRecord::new("data", &args.data)?,
        InputRecord::new("model", &args.model)?,
    ];
    out.write_json(
        args.out.join("run.json"),
        &run_manifest("eval", &opts, inputs),
    )?;
    out.commit();
    println!(
        "{}: accuracy {:.4}, macro F1 {:.4} over {} sequences",
        opts.model.name(),
        metrics.accuracy,
        metrics.macro_f1,
        metrics.sequences
    );
    Ok(())
}

fn write_sequences(
    out: &mut Outputs,
    path: &Path,
    ds: &Dataset,
    outcomes: &[SequenceOutcome],
) -> Result<()> {
    let path = out.file(path);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(
        w,
        "sequence,subject,truth,predicted,decision_frame,probability,correct"
    )?;
    for o in outcomes {
        let first = &ds.frames[o.frames.start];
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            ds.sequences[o.sequence],
            ds.subjects[first.subject],
            ds.labels.name(o.truth),
            ds.labels.name(o.decision.label),
            ds.frames[o.frames.start + o.decision.frame].frame_index,
            o.decision.probability,
            o.correct()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_traces(
    out: &mut Outputs,
    path: &Path,
    ds: &Dataset,
    kind: ModelKind,
    outcomes: &[SequenceOutcome],
) -> Result<()> {
    let path = out.file(path);
    let mut w = BufWriter::new(File::create(&path)?);
    write_trace_header(&mut w, &ds.labels)?;
    for o in outcomes {
        write_trace_rows(
            &mut w,
            &ds.sequences[o.sequence],
            kind,
            &ds.frames[o.frames.clone()],
            &o.trace,
        )?;
    }
    w.flush()?;
    Ok(())
}
