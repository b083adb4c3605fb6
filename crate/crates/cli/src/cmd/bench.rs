use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pcrf::channels::load_pgm;
use pcrf::frame::LandmarkFrame;
use pcrf::inference::{ModelKind, WindowConfig};
use pcrf::latency::{time_channels, time_model, with_forest_size, LatencyStats};
use pcrf::model::ModelBundle;
use pcrf::synth::render_image;
use pcrf::GrayImage;
use serde::{Deserialize, Serialize};

use crate::errors::Usage;
use crate::opts::{load_config, load_dataset, model_kind, WindowArgs};
use crate::output::{run_manifest, InputRecord, Outputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub model: ModelKind,
    /// Trees per pair to time.
    pub trees: Vec<usize>,
    /// Every forest is resized to this many trees by repeating its trees.
    /// `None` times the forests as trained.
    pub cell_size: Option<usize>,
    /// Frames to time, taken as whole sequences from the start.
    pub frames: usize,
    pub seed: u64,
    pub window: Option<WindowConfig>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            model: ModelKind::Mvpcrf,
            trees: vec![500, 1000, 2000, 6000],
            cell_size: None,
            frames: 240,
            seed: 0,
            window: None,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Corpus manifest (CSV) providing the frames.
    #[arg(long)]
    pub data: PathBuf,
    /// Model bundle written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub kind: Option<String>,
    /// Comma-separated trees per pair.
    #[arg(long, value_delimiter = ',')]
    pub trees: Option<Vec<usize>>,
    /// Resize every forest to this many trees.
    #[arg(long)]
    pub cell_size: Option<usize>,
    /// Frames to time.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Serialize)]
struct ModelTiming {
    trees: usize,
    #[serde(flatten)]
    stats: LatencyStats,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    model: &'a str,
    threads: usize,
    window: WindowConfig,
    cell_size: Option<usize>,
    channels: LatencyStats,
    evaluation: Vec<ModelTiming>,
}

fn frame_image(f: &LandmarkFrame, root: &Path) -> Result<GrayImage> {
    Ok(match &f.image {
        Some(rel) => load_pgm(&root.join(rel))?,
        None => render_image(&f.landmarks),
    })
}

pub fn run(args: Args) -> Result<()> {
    let mut opts: BenchOptions = load_config(args.config.as_deref())?;
    if let Some(k) = &args.kind {
        opts.model = model_kind(k)?;
    }
    if let Some(t) = &args.trees {
        opts.trees = t.clone();
    }
    if args.cell_size.is_some() {
        opts.cell_size = args.cell_size;
    }
    if let Some(n) = args.frames {
        opts.frames = n;
    }
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    if opts.trees.is_empty()
        || opts.trees.contains(&0)
        || opts.frames == 0
        || opts.cell_size == Some(0)
    {
        return Err(Usage("tree counts, cell size and frame count must be positive".into()).into());
    }
    let mut bundle = ModelBundle::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    if bundle.uses_appearance() {
        return Err(Usage(
            "bench times landmark-only models; retrain with --geometric-only".into(),
        )
        .into());
    }
    if let Some(n) = opts.cell_size {
        bundle = with_forest_size(&bundle, n);
    }
    let mut window = opts.window.unwrap_or(bundle.window);
    args.window.apply(&mut window)?;
    opts.window = Some(window);
    let model = bundle.model(opts.model).map_err(|e| Usage(e.to_string()))?;

    let ds = load_dataset(&args.data)?;
    let mut sequences: Vec<&[LandmarkFrame]> = Vec::new();
    let mut taken = 0;
    for r in ds.sequence_ranges() {
        if taken >= opts.frames {
            break;
        }
        taken += r.len();
        sequences.push(&ds.frames[r]);
    }
    let root = args.data.parent().unwrap_or(Path::new("."));
    let images = sequences
        .iter()
        .flat_map(|s| s.iter())
        .map(|f| frame_image(f, root))
        .collect::<Result<Vec<_>>>()?;
    let channels = LatencyStats::from_durations(&time_channels(&images)?)?;
    drop(images);

    let mut evaluation = Vec::new();
    for &t in &opts.trees {
        let ms = time_model(model, &sequences, window, t, opts.seed)?;
        evaluation.push(ModelTiming {
            trees: t,
            stats: LatencyStats::from_durations(&ms)?,
        });
    }
    let report = Report {
        model: opts.model.name(),
        threads: pcrf::parallel::current_threads(),
        window,
        cell_size: opts.cell_size,
        channels,
        evaluation,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = &args.out {
        let mut out = Outputs::new();
        out.write_json(path.clone(), &report)?;
        let inputs = vec![
            InputRecord::new("data", &args.data)?,
            InputRecord::new("model", &args.model)?,
        ];
        out.write_json(
            crate::opts::sibling(path, ".run.json"),
            &run_manifest("bench", &opts, inputs),
        )?;
        out.commit();
    }
    Ok(())
}
