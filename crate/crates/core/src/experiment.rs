//! Training pipeline shared by the command line and the experiments: builds
//! every component a set of models needs into one [`ModelBundle`].

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Dataset, Pose};
use crate::inference::{ModelKind, WindowConfig};
use crate::manifest::{select_training_frames, SelectionPolicy};
use crate::model::ModelBundle;
use crate::params::HyperParams;
use crate::pose::{build_pose_sampler, PoseBinTable, PoseSampler, DEFAULT_SMOOTHING};
use crate::training::{frame_bin, train_full, train_mvrf, train_pcrf, train_static, PairConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub models: Vec<ModelKind>,
    /// Settings of the static forests (RF, MVRF, and the initial
    /// predictions of the pairwise models).
    pub static_params: HyperParams,
    /// Settings of the pairwise forests.
    pub pair_params: HyperParams,
    pub pairs: PairConfig,
    pub selection: SelectionPolicy,
    pub bins: PoseBinTable,
    /// Gaussian smoothing of the pose sampler, degrees.
    pub smoothing: f64,
    pub window: WindowConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            models: vec![ModelKind::Rf, ModelKind::Pcrf],
            static_params: HyperParams::static_profile(),
            pair_params: HyperParams::pcrf_profile(),
            pairs: PairConfig::default(),
            selection: SelectionPolicy::AllLabeled,
            bins: PoseBinTable::fifteen_bins(),
            smoothing: DEFAULT_SMOOTHING,
            window: WindowConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Same forests with `n_trees` trees and candidate counts scaled by
    /// `factor`.
    pub fn reduced(mut self, n_trees: usize, factor: f64) -> Self {
        self.static_params = self
            .static_params
            .with_trees(n_trees)
            .scaled_candidates(factor);
        self.pair_params = self
            .pair_params
            .with_trees(n_trees)
            .scaled_candidates(factor);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no model requested".into()));
        }
        self.static_params.validate()?;
        self.pair_params.validate()?;
        self.bins.validate()?;
        self.window.validate()?;
        if !(self.smoothing > 0.0) {
            return Err(Error::Config("pose smoothing must be positive".into()));
        }
        Ok(())
    }

    fn needs(&self, kinds: &[ModelKind]) -> bool {
        self.models.iter().any(|m| kinds.contains(m))
    }
}

/// Pose sampler over the labeled frames of `ds` that fall in a bin.
pub fn fit_pose_sampler(ds: &Dataset, bins: &PoseBinTable, smoothing: f64) -> Result<PoseSampler> {
    let poses: Vec<(Pose, usize)> = ds
        .frames
        .iter()
        .filter(|f| f.label.is_some())
        .filter_map(|f| Some((f.pose?, frame_bin(bins, f)?)))
        .collect();
    build_pose_sampler(&poses, bins.len(), smoothing)
}

/// Selects the training frames of `ds` and trains the components of every
/// requested model.
pub fn train_bundle(ds: &Dataset, cfg: &TrainConfig) -> Result<ModelBundle> {
    use ModelKind::*;
    cfg.validate()?;
    let train = select_training_frames(ds, cfg.selection)?;
    info!(
        "training {:?} on {} frames of {} subjects",
        cfg.models,
        train.frames.len(),
        train.subjects.len()
    );
    let mut bundle = ModelBundle::new(ds.layout, ds.labels.clone(), cfg.window);
    if cfg.needs(&[Rf, Full, Pcrf]) {
        bundle.static_forest = Some(train_static(&train, &cfg.static_params, cfg.seed)?);
    }
    if cfg.needs(&[Full]) {
        bundle.full = Some(train_full(&train, &cfg.pair_params, &cfg.pairs, cfg.seed)?);
    }
    if cfg.needs(&[Pcrf]) {
        bundle.bank = Some(train_pcrf(
            &train,
            &cfg.pair_params,
            &cfg.pairs,
            None,
            cfg.seed,
        )?);
    }
    if cfg.needs(&[Mvrf, Mvpcrf]) {
        bundle.multiview_static =
            Some(train_mvrf(&train, &cfg.static_params, &cfg.bins, cfg.seed)?);
        bundle.sampler = Some(fit_pose_sampler(&train, &cfg.bins, cfg.smoothing)?);
    }
    if cfg.needs(&[Mvpcrf]) {
        bundle.multiview_bank = Some(train_pcrf(
            &train,
            &cfg.pair_params,
            &cfg.pairs,
            Some(&cfg.bins),
            cfg.seed,
        )?);
    }
    Ok(bundle)
}
