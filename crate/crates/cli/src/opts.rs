use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use pcrf::experiment::TrainConfig;
use pcrf::frame::Dataset;
use pcrf::inference::{ModelKind, PriorMode, WindowConfig};
use pcrf::manifest::{load_manifest, SelectionPolicy};
use pcrf::params::HyperParams;

use crate::errors::Usage;

/// Options from a JSON config file, or the defaults without one. Keys
/// missing from the file keep their defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())).into())
}

/// `static`, `pcrf`, or the path of a JSON hyperparameter file.
pub fn profile(name: &str) -> Result<HyperParams> {
    if let Some(hp) = HyperParams::by_name(name) {
        return Ok(hp);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(Usage(format!(
            "unknown profile {name:?}: expected static, pcrf or a JSON file"
        ))
        .into());
    }
    load_config(Some(path))
}

pub fn model_kind(name: &str) -> Result<ModelKind> {
    ModelKind::from_name(name).ok_or_else(|| {
        Usage(format!(
            "unknown model {name:?}: expected rf, full, pcrf, mvrf or mvpcrf"
        ))
        .into()
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    load_manifest(path).with_context(|| format!("loading {}", path.display()))
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct WindowArgs {
    /// Temporal window length in frames.
    #[arg(long)]
    pub window_length: Option<usize>,
    /// Stride between paired previous frames.
    #[arg(long)]
    pub step: Option<usize>,
    /// Source of the previous-frame priors: static or dynamic.
    #[arg(long)]
    pub prior: Option<String>,
}

impl WindowArgs {
    pub fn apply(&self, w: &mut WindowConfig) -> Result<()> {
        if let Some(n) = self.window_length {
            w.length = n;
        }
        if let Some(s) = self.step {
            w.step = s;
        }
        if let Some(p) = &self.prior {
            w.prior_mode = match p.as_str() {
                "static" => PriorMode::Static,
                "dynamic" => PriorMode::Dynamic,
                _ => {
                    return Err(Usage(format!(
                        "unknown prior mode {p:?}: expected static or dynamic"
                    ))
                    .into())
                }
            };
        }
        w.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ForestArgs {
    /// Comma-separated models to train: rf, full, pcrf, mvrf, mvpcrf.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Hyperparameters of the static forests: static, pcrf or a JSON file.
    #[arg(long)]
    pub static_profile: Option<String>,
    /// Hyperparameters of the pairwise forests: static, pcrf or a JSON file.
    #[arg(long)]
    pub pair_profile: Option<String>,
    /// Trees per forest (per bank cell for the conditional models).
    #[arg(long)]
    pub trees: Option<usize>,
    /// Multiplies every template's candidate count.
    #[arg(long)]
    pub candidate_scale: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Training frame selection: all_labeled or first_last(K).
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub window: WindowArgs,
}

impl ForestArgs {
    pub fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(names) = &self.models {
            cfg.models = names.iter().map(|n| model_kind(n)).collect::<Result<_>>()?;
        }
        if let Some(p) = &self.static_profile {
            cfg.static_params = profile(p)?;
        }
        if let Some(p) = &self.pair_profile {
            cfg.pair_params = profile(p)?;
        }
        for hp in [&mut cfg.static_params, &mut cfg.pair_params] {
            if let Some(t) = self.trees {
                hp.n_trees = t;
            }
            if let Some(f) = self.candidate_scale {
                if !(f > 0.0) {
                    return Err(Usage("candidate scale must be positive".into()).into());
                }
                *hp = hp.clone().scaled_candidates(f);
            }
            if let Some(d) = self.max_depth {
                hp.max_depth = d;
            }
        }
        if let Some(s) = &self.selection {
            cfg.selection = SelectionPolicy::parse(s).ok_or_else(|| {
                Usage(format!(
                    "unknown selection {s:?}: expected all_labeled or first_last(K)"
                ))
            })?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        self.window.apply(&mut cfg.window)?;
        cfg.validate()?;
        Ok(())
    }
}

/// `file` with `suffix` appended to its name.
pub fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
