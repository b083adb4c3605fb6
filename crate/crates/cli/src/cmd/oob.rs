use std::path::PathBuf;

use anyhow::{Context, Result};
use pcrf::experiment::train_bundle;
use pcrf::forest::OobReport;
use pcrf::inference::ModelKind;
use pcrf::manifest::select_training_frames;
use pcrf::training::{frame_bin, pair_oob, static_oob};
use serde::Serialize;

use super::train::TrainOptions;
use crate::opts::{load_config, load_dataset, ForestArgs};
use crate::output::{run_manifest, InputRecord, Outputs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Corpus manifest (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long)]
    pub geometric_only: bool,
}

#[derive(Debug, Serialize)]
struct Entry {
    forest: String,
    #[serde(flatten)]
    report: OobReport,
}

#[derive(Debug, Serialize)]
struct OobFile<'a> {
    labels: &'a [String],
    forests: &'a [Entry],
}

pub fn run(args: Args) -> Result<()> {
    let mut opts: TrainOptions = load_config(args.config.as_deref())?;
    args.forest.apply(&mut opts.train)?;
    opts.geometric_only |= args.geometric_only;
    let mut ds = load_dataset(&args.data)?;
    super::maybe_attach_channels(&mut ds, &args.data, opts.geometric_only)?;
    let cfg = &opts.train;
    let bundle = train_bundle(&ds, cfg).context("training")?;
    let train = select_training_frames(&ds, cfg.selection)?;
    let name = |l: usize| ds.labels.name(l).to_string();

    let mut forests = Vec::new();
    if let Some(t) = &bundle.static_forest {
        forests.push(Entry {
            forest: "static".into(),
            report: static_oob(&t.forest, &train),
        });
    }
    if let Some(b) = &bundle.multiview_static {
        for (&bin, f) in &b.cells {
            let in_bin = train.filtered(|fr| frame_bin(&b.bins, fr) == Some(bin));
            forests.push(Entry {
                forest: format!("static/bin{bin:02}"),
                report: static_oob(f, &in_bin),
            });
        }
    }
    for (tag, bank) in [("pcrf", &bundle.bank), ("mvpcrf", &bundle.multiview_bank)] {
        let Some(bank) = bank else { continue };
        for (key, report) in pair_oob(bank, &train, &cfg.pairs, cfg.seed) {
            let forest = if bank.is_multiview() {
                format!("{tag}/{}/bin{:02}", name(key.source), key.bin)
            } else {
                format!("{tag}/{}", name(key.source))
            };
            forests.push(Entry { forest, report });
        }
    }
    if cfg.models.contains(&ModelKind::Full) {
        log::warn!("out-of-bag scoring of the full pairwise forest is not reported");
    }

    let mut out = Outputs::new();
    out.dir(&args.out)?;
    out.write_json(
        args.out.join("oob.json"),
        &OobFile {
            labels: &ds.labels.names,
            forests: &forests,
        },
    )?;
    out.write_json(
        args.out.join("run.json"),
        &run_manifest("oob", &opts, vec![InputRecord::new("data", &args.data)?]),
    )?;
    out.commit();
    for e in &forests {
        println!(
            "{}: oob accuracy {:.4} ({} evaluated, {} skipped)",
            e.forest, e.report.accuracy, e.report.evaluated, e.report.skipped
        );
    }
    Ok(())
}
