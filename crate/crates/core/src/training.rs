//! Training of the static forest, the full pairwise forest, the conditional
//! bank (one forest per source label, optionally per pose bin) and the
//! multi-view static forests.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureInput, FeatureSampler, ThresholdRanges};
use crate::forest::{
    balance, build_balanced_bootstrap, derive_seed, draw_subjects, grow_forest, tree_rng,
    Bootstrap, Forest, GrowthReport, OobReport, TreeCaps, TreeRng,
};
use crate::frame::{Dataset, LabelSet, LandmarkFrame};
use crate::params::HyperParams;
use crate::pose::PoseBinTable;

/// Per-subject frame caps used when forming pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Previous frames drawn per subject.
    pub src_per_subject: usize,
    /// Current frames drawn per subject and label.
    pub dst_per_subject: usize,
    /// Allow the previous frame to come from another pose bin.
    pub cross_view: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            src_per_subject: 4,
            dst_per_subject: 4,
            cross_view: false,
        }
    }
}

/// Bank key: source label of the previous frame and pose bin of the current
/// frame (always 0 for single-view banks). Ordered by source, then bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub source: usize,
    pub bin: usize,
}

/// A (previous, current) frame pair, as indices into `Dataset::frames`.
/// The pair label is the label of `cur`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairSample {
    pub prev: u32,
    pub cur: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBootstrap {
    pub pairs: Vec<PairSample>,
    pub subjects: Vec<usize>,
    pub missing_labels: Vec<usize>,
}

/// Pose bin of a frame, by nearest bin center; `None` without a pose.
pub fn frame_bin(bins: &PoseBinTable, frame: &LandmarkFrame) -> Option<usize> {
    frame.pose.map(|p| bins.nearest(p))
}

/// Candidate frames of one training cell, grouped per subject.
#[derive(Debug, Clone)]
pub struct PairPool {
    n_labels: usize,
    prev: Vec<Vec<u32>>,
    /// `dst[subject][label]`.
    dst: Vec<Vec<Vec<u32>>>,
    subjects: Vec<usize>,
    present: Vec<bool>,
}

/// Which previous/current frames a cell accepts.
#[derive(Debug, Clone, Copy)]
pub struct CellFilter<'a> {
    /// Required label of the previous frame; `None` accepts any label.
    pub source: Option<usize>,
    /// Required pose bin of the current frame (and of the previous frame
    /// unless `cross_view`).
    pub bin: Option<(&'a PoseBinTable, usize)>,
    pub cross_view: bool,
}

impl<'a> CellFilter<'a> {
    pub fn single_view(source: Option<usize>) -> Self {
        CellFilter {
            source,
            bin: None,
            cross_view: false,
        }
    }
}

impl PairPool {
    /// Labeled frames of `ds` eligible for the cell described by `filter`.
    pub fn new(ds: &Dataset, filter: CellFilter<'_>) -> Self {
        let n_labels = ds.labels.len();
        let n_subjects = ds.subjects.len();
        let mut prev = vec![Vec::new(); n_subjects];
        let mut dst = vec![vec![Vec::new(); n_labels]; n_subjects];
        for (i, f) in ds.frames.iter().enumerate() {
            let Some(label) = f.label else { continue };
            let in_bin = match filter.bin {
                None => true,
                Some((table, bin)) => frame_bin(table, f) == Some(bin),
            };
            if in_bin {
                dst[f.subject][label].push(i as u32);
            }
            if filter.source.is_none_or(|s| s == label) && (in_bin || filter.cross_view) {
                prev[f.subject].push(i as u32);
            }
        }
        let mut present = vec![false; n_labels];
        let mut subjects = Vec::new();
        for s in 0..n_subjects {
            if prev[s].is_empty() || dst[s].iter().all(Vec::is_empty) {
                continue;
            }
            subjects.push(s);
            for (l, d) in dst[s].iter().enumerate() {
                present[l] |= !d.is_empty();
            }
        }
        PairPool {
            n_labels,
            prev,
            dst,
            subjects,
            present,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Subjects with at least one previous and one current frame.
    pub fn subjects(&self) -> &[usize] {
        &self.subjects
    }

    /// Draws up to `src_per_subject` previous frames and up to
    /// `dst_per_subject` current frames per label for each subject, and
    /// returns their cross product grouped by pair label.
    pub fn draw_pairs<R: Rng + ?Sized>(
        &self,
        subjects: &[usize],
        cfg: &PairConfig,
        rng: &mut R,
    ) -> Vec<Vec<PairSample>> {
        let mut by_label = vec![Vec::new(); self.n_labels];
        for &s in subjects {
            let prev = sample_up_to(&self.prev[s], cfg.src_per_subject, rng);
            for (l, pool) in self.dst[s].iter().enumerate() {
                let cur = sample_up_to(pool, cfg.dst_per_subject, rng);
                for &p in &prev {
                    for &c in &cur {
                        by_label[l].push(PairSample { prev: p, cur: c });
                    }
                }
            }
        }
        by_label
    }
}

fn sample_up_to<R: Rng + ?Sized>(items: &[u32], k: usize, rng: &mut R) -> Vec<u32> {
    if items.len() <= k {
        return items.to_vec();
    }
    let mut picks = index::sample(rng, items.len(), k).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| items[i]).collect()
}

/// Subject-level pair bootstrap of one cell: draws a subject fraction, forms
/// pairs and downsamples every pair label to the minority count.
pub fn build_pair_bootstrap<R: Rng + ?Sized>(
    pool: &PairPool,
    data_ratio: f64,
    cfg: &PairConfig,
    rng: &mut R,
) -> PairBootstrap {
    let subjects = draw_subjects(&pool.subjects, data_ratio, rng);
    let by_label = pool.draw_pairs(&subjects, cfg, rng);
    let mut flat = Vec::new();
    let mut index_by_label = Vec::with_capacity(by_label.len());
    for pairs in by_label {
        let start = flat.len() as u32;
        flat.extend(pairs);
        index_by_label.push((start..flat.len() as u32).collect());
    }
    let (keep, missing_labels) = balance(index_by_label, &pool.present, rng);
    PairBootstrap {
        pairs: keep.into_iter().map(|i| flat[i as usize]).collect(),
        subjects,
        missing_labels,
    }
}

fn effective_params(ds: &Dataset, hp: &HyperParams) -> HyperParams {
    if ds.has_channels() {
        hp.clone()
    } else {
        info!("frames carry no image channels; using geometric templates only");
        hp.clone().geometric_only()
    }
}

fn caps(hp: &HyperParams) -> TreeCaps {
    TreeCaps {
        max_depth: hp.max_depth,
        min_samples_leaf: hp.min_samples_leaf,
    }
}

fn require_labels(ds: &Dataset) -> Result<()> {
    let found = ds.labels_present().len();
    if found < 2 {
        return Err(Error::TooFewLabels { needed: 2, found });
    }
    Ok(())
}

fn pair_input<'a>(ds: &'a Dataset, p: PairSample) -> FeatureInput<'a> {
    FeatureInput::pair(&ds.frames[p.prev as usize], &ds.frames[p.cur as usize])
}

const RANGE_STREAM: u64 = u64::MAX;
const STATIC_STREAM: u64 = u64::MAX - 1;
const FULL_STREAM: u64 = u64::MAX - 2;

fn cell_stream(key: CellKey) -> u64 {
    ((key.source as u64) << 32) | key.bin as u64
}

/// A single trained forest with the settings used to grow it.
#[derive(Debug, Clone)]
pub struct TrainedForest {
    pub forest: Forest<Feature>,
    pub hp: HyperParams,
    pub ranges: ThresholdRanges,
    pub report: GrowthReport,
}

fn grow_static(
    ds: &Dataset,
    frames: &[u32],
    hp: &HyperParams,
    ranges: ThresholdRanges,
    seed: u64,
) -> (Forest<Feature>, GrowthReport) {
    let sampler = FeatureSampler::new(hp, ranges, ds.layout.count);
    let subjects: Vec<usize> = frames
        .iter()
        .map(|&i| ds.frames[i as usize].subject)
        .collect();
    let labels: Vec<usize> = frames
        .iter()
        .map(|&i| ds.frames[i as usize].label.expect("labeled frame"))
        .collect();
    let n_labels = ds.labels.len();
    let (trees, boots, report) =
        grow_forest(hp.n_trees, n_labels, caps(hp), &sampler, seed, |rng| {
            let b = build_balanced_bootstrap(&subjects, &labels, n_labels, hp.data_ratio, rng);
            Bootstrap {
                inputs: b
                    .samples
                    .iter()
                    .map(|&k| FeatureInput::single(&ds.frames[frames[k as usize] as usize]))
                    .collect(),
                labels: b.samples.iter().map(|&k| labels[k as usize]).collect(),
                subjects: b.subjects,
                missing_labels: b.missing_labels,
            }
        });
    (
        Forest::new(ds.labels.clone(), ds.subjects.clone(), trees, boots),
        report,
    )
}

fn labeled_frames(ds: &Dataset) -> Vec<u32> {
    (0..ds.frames.len() as u32)
        .filter(|&i| ds.frames[i as usize].label.is_some())
        .collect()
}

fn static_ranges(ds: &Dataset, frames: &[u32], seed: u64) -> ThresholdRanges {
    let inputs: Vec<FeatureInput<'_>> = frames
        .iter()
        .map(|&i| FeatureInput::single(&ds.frames[i as usize]))
        .collect();
    ThresholdRanges::estimate(&inputs, ds.layout.count, &mut tree_rng(seed, RANGE_STREAM))
}

/// Static random forest on the labeled frames of `ds`.
pub fn train_static(ds: &Dataset, hp: &HyperParams, seed: u64) -> Result<TrainedForest> {
    hp.validate()?;
    require_labels(ds)?;
    let hp = effective_params(ds, hp);
    let frames = labeled_frames(ds);
    let ranges = static_ranges(ds, &frames, seed);
    let (forest, report) = grow_static(ds, &frames, &hp, ranges, derive_seed(seed, STATIC_STREAM));
    Ok(TrainedForest {
        forest,
        hp,
        ranges,
        report,
    })
}

/// Threshold ranges over a pooled draw of pairs from every cell.
fn pair_ranges(ds: &Dataset, pools: &[&PairPool], cfg: &PairConfig, seed: u64) -> ThresholdRanges {
    let mut rng = tree_rng(seed, RANGE_STREAM);
    let mut inputs = Vec::new();
    for pool in pools {
        for pairs in pool.draw_pairs(&pool.subjects, cfg, &mut rng) {
            inputs.extend(pairs.into_iter().map(|p| pair_input(ds, p)));
        }
    }
    ThresholdRanges::estimate(&inputs, ds.layout.count, &mut rng)
}

fn grow_pairwise(
    ds: &Dataset,
    pool: &PairPool,
    hp: &HyperParams,
    ranges: ThresholdRanges,
    cfg: &PairConfig,
    seed: u64,
) -> (Forest<Feature>, GrowthReport) {
    let sampler = FeatureSampler::new(hp, ranges, ds.layout.count);
    let (trees, boots, report) = grow_forest(
        hp.n_trees,
        ds.labels.len(),
        caps(hp),
        &sampler,
        seed,
        |rng| {
            let b = build_pair_bootstrap(pool, hp.data_ratio, cfg, rng);
            Bootstrap {
                inputs: b.pairs.iter().map(|&p| pair_input(ds, p)).collect(),
                labels: b
                    .pairs
                    .iter()
                    .map(|p| ds.frames[p.cur as usize].label.expect("labeled frame"))
                    .collect(),
                subjects: b.subjects,
                missing_labels: b.missing_labels,
            }
        },
    );
    (
        Forest::new(ds.labels.clone(), ds.subjects.clone(), trees, boots),
        report,
    )
}

/// Full pairwise forest trained on transitions from any source label.
pub fn train_full(
    ds: &Dataset,
    hp: &HyperParams,
    cfg: &PairConfig,
    seed: u64,
) -> Result<TrainedForest> {
    hp.validate()?;
    require_labels(ds)?;
    let hp = effective_params(ds, hp);
    let pool = PairPool::new(ds, CellFilter::single_view(None));
    if pool.is_empty() {
        return Err(Error::Config("no subject has frames to pair".into()));
    }
    let ranges = pair_ranges(ds, &[&pool], cfg, seed);
    let (forest, report) =
        grow_pairwise(ds, &pool, &hp, ranges, cfg, derive_seed(seed, FULL_STREAM));
    Ok(TrainedForest {
        forest,
        hp,
        ranges,
        report,
    })
}

/// Forests keyed by (source label, pose bin).
#[derive(Debug, Clone)]
pub struct ConditionalBank {
    pub labels: LabelSet,
    pub bins: PoseBinTable,
    pub hp: HyperParams,
    pub ranges: ThresholdRanges,
    pub cells: BTreeMap<CellKey, Forest<Feature>>,
    /// Keys with no training pairs.
    pub skipped: Vec<CellKey>,
    pub reports: BTreeMap<CellKey, GrowthReport>,
}

impl ConditionalBank {
    pub fn cell(&self, key: CellKey) -> Option<&Forest<Feature>> {
        self.cells.get(&key)
    }

    pub fn is_multiview(&self) -> bool {
        self.bins.len() > 1
    }
}

/// Conditional bank. With `bins`, one forest per (source label, pose bin),
/// trained on pairs whose current frame lies in the bin; otherwise one
/// forest per source label on a single frontal bin.
pub fn train_pcrf(
    ds: &Dataset,
    hp: &HyperParams,
    cfg: &PairConfig,
    bins: Option<&PoseBinTable>,
    seed: u64,
) -> Result<ConditionalBank> {
    hp.validate()?;
    require_labels(ds)?;
    let hp = effective_params(ds, hp);
    let table = bins.cloned().unwrap_or_else(PoseBinTable::frontal);
    table.validate()?;
    let multiview = bins.is_some();
    if multiview
        && ds
            .frames
            .iter()
            .any(|f| f.label.is_some() && f.pose.is_none())
    {
        warn!("labeled frames without a pose are excluded from multi-view training");
    }

    let mut keys = Vec::new();
    let mut pools = Vec::new();
    let mut skipped = Vec::new();
    for source in 0..ds.labels.len() {
        for bin in 0..table.len() {
            let key = CellKey { source, bin };
            let filter = CellFilter {
                source: Some(source),
                bin: multiview.then_some((&table, bin)),
                cross_view: cfg.cross_view,
            };
            let pool = PairPool::new(ds, filter);
            if pool.is_empty() {
                warn!(
                    "no training pairs for source label {} in pose bin {bin}; cell skipped",
                    ds.labels.name(source)
                );
                skipped.push(key);
                continue;
            }
            keys.push(key);
            pools.push(pool);
        }
    }
    if keys.is_empty() {
        return Err(Error::Config("no bank cell has training pairs".into()));
    }
    let ranges = pair_ranges(ds, &pools.iter().collect::<Vec<_>>(), cfg, seed);

    let mut cells = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for (key, pool) in keys.into_iter().zip(&pools) {
        let (forest, report) = grow_pairwise(
            ds,
            pool,
            &hp,
            ranges,
            cfg,
            derive_seed(seed, cell_stream(key)),
        );
        cells.insert(key, forest);
        reports.insert(key, report);
    }
    Ok(ConditionalBank {
        labels: ds.labels.clone(),
        bins: table,
        hp,
        ranges,
        cells,
        skipped,
        reports,
    })
}

/// Static forests keyed by pose bin.
#[derive(Debug, Clone)]
pub struct StaticBank {
    pub labels: LabelSet,
    pub bins: PoseBinTable,
    pub hp: HyperParams,
    pub ranges: ThresholdRanges,
    pub cells: BTreeMap<usize, Forest<Feature>>,
    pub skipped: Vec<usize>,
}

/// One static forest per pose bin, trained on the frames of that bin.
pub fn train_mvrf(
    ds: &Dataset,
    hp: &HyperParams,
    bins: &PoseBinTable,
    seed: u64,
) -> Result<StaticBank> {
    hp.validate()?;
    require_labels(ds)?;
    bins.validate()?;
    let hp = effective_params(ds, hp);
    let frames = labeled_frames(ds);
    let ranges = static_ranges(ds, &frames, seed);
    let mut cells = BTreeMap::new();
    let mut skipped = Vec::new();
    for bin in 0..bins.len() {
        let in_bin: Vec<u32> = frames
            .iter()
            .copied()
            .filter(|&i| frame_bin(bins, &ds.frames[i as usize]) == Some(bin))
            .collect();
        if in_bin.is_empty() {
            warn!("no training frames in pose bin {bin}; cell skipped");
            skipped.push(bin);
            continue;
        }
        let (forest, _) = grow_static(ds, &in_bin, &hp, ranges, derive_seed(seed, bin as u64));
        cells.insert(bin, forest);
    }
    if cells.is_empty() {
        return Err(Error::Config("no pose bin has training frames".into()));
    }
    Ok(StaticBank {
        labels: ds.labels.clone(),
        bins: bins.clone(),
        hp,
        ranges,
        cells,
        skipped,
    })
}

/// Out-of-bag accuracy of a static forest on the labeled frames of `ds`.
pub fn static_oob(forest: &Forest<Feature>, ds: &Dataset) -> OobReport {
    let lookup = forest.subject_lookup(&ds.subjects);
    let frames = labeled_frames(ds);
    let inputs: Vec<FeatureInput<'_>> = frames
        .iter()
        .map(|&i| FeatureInput::single(&ds.frames[i as usize]))
        .collect();
    let labels: Vec<usize> = frames
        .iter()
        .map(|&i| ds.frames[i as usize].label.unwrap())
        .collect();
    let subjects: Vec<Option<usize>> = frames
        .iter()
        .map(|&i| lookup[ds.frames[i as usize].subject])
        .collect();
    forest.oob(&inputs, &labels, &subjects)
}

/// Out-of-bag pair accuracy of every bank cell, on one unbalanced pair draw
/// over all subjects of the cell.
pub fn pair_oob(
    bank: &ConditionalBank,
    ds: &Dataset,
    cfg: &PairConfig,
    seed: u64,
) -> BTreeMap<CellKey, OobReport> {
    let multiview = bank.is_multiview();
    let mut out = BTreeMap::new();
    for (&key, forest) in &bank.cells {
        let filter = CellFilter {
            source: Some(key.source),
            bin: multiview.then_some((&bank.bins, key.bin)),
            cross_view: cfg.cross_view,
        };
        let pool = PairPool::new(ds, filter);
        let mut rng: TreeRng = tree_rng(seed, cell_stream(key));
        let pairs: Vec<PairSample> = pool.draw_pairs(&pool.subjects, cfg, &mut rng).concat();
        let lookup = forest.subject_lookup(&ds.subjects);
        let inputs: Vec<_> = pairs.iter().map(|&p| pair_input(ds, p)).collect();
        let labels: Vec<usize> = pairs
            .iter()
            .map(|p| ds.frames[p.cur as usize].label.unwrap())
            .collect();
        let subjects: Vec<_> = pairs
            .iter()
            .map(|p| lookup[ds.frames[p.cur as usize].subject])
            .collect();
        out.insert(key, forest.oob(&inputs, &labels, &subjects));
    }
    out
}
