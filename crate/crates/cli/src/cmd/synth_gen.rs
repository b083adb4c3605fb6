use std::path::PathBuf;

use anyhow::Result;
use pcrf::manifest::write_corpus;
use pcrf::synth::{GeneratorConfig, PoseMode};

use crate::errors::Usage;
use crate::opts::load_config;
use crate::output::{run_manifest, Outputs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Sequences per subject.
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    pub frames: Option<usize>,
    /// frontal or bins15.
    #[arg(long)]
    pub pose_mode: Option<String>,
    /// Strength of the expression-like subject morphology.
    #[arg(long)]
    pub morphology: Option<f64>,
    /// Landmark noise, inter-ocular units.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of each sequence spent returning to neutral.
    #[arg(long)]
    pub offset_fraction: Option<f64>,
    /// Write a 250x250 PGM image per frame.
    #[arg(long)]
    pub render_images: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn resolve(args: &Args) -> Result<GeneratorConfig> {
    let mut cfg: GeneratorConfig = load_config(args.config.as_deref())?;
    if let Some(v) = args.subjects {
        cfg.n_subjects = v;
    }
    if let Some(v) = args.sequences {
        cfg.n_sequences_per_subject = v;
    }
    if let Some(v) = args.frames {
        cfg.frames_per_sequence = v;
    }
    if let Some(m) = &args.pose_mode {
        cfg.pose_mode = match m.as_str() {
            "frontal" => PoseMode::Frontal,
            "bins15" => PoseMode::Bins15,
            _ => {
                return Err(Usage(format!(
                    "unknown pose mode {m:?}: expected frontal or bins15"
                ))
                .into())
            }
        };
    }
    if let Some(v) = args.morphology {
        cfg.morphology_strength = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.offset_fraction {
        cfg.offset_fraction = v;
    }
    cfg.render_images |= args.render_images;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: Args) -> Result<()> {
    let cfg = resolve(&args)?;
    let mut out = Outputs::new();
    out.dir(&args.out)?;
    for name in ["manifest.csv", "manifest.json", "generator.json"] {
        out.file(args.out.join(name));
    }
    if cfg.render_images {
        out.file(args.out.join("images"));
    }
    let ds = write_corpus(&cfg, &args.out)?;
    out.write_json(
        args.out.join("run.json"),
        &run_manifest("synth-gen", &cfg, Vec::new()),
    )?;
    out.commit();
    println!(
        "wrote {} frames in {} sequences of {} subjects to {}",
        ds.frames.len(),
        ds.sequences.len(),
        ds.subjects.len(),
        args.out.display()
    );
    Ok(())
}
