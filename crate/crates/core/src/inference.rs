//! Frame-by-frame prediction with the static, full pairwise, conditional,
//! multi-view static and multi-view conditional models, plus the
//! sequence-level decision.
//!
//! Tree sampling is seeded per frame: frame `n` of a sequence draws from
//! `tree_rng(seed, n)`. For each previous frame (most recent first) the
//! allocation over bank cells is computed, then every cell with a positive
//! count draws its trees in ascending key order with [`sample_trees`].

use std::collections::VecDeque;
use std::io::Write;

use log::debug;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureInput};
use crate::forest::{argmax, derive_seed, tree_rng, Forest, TreeRng};
use crate::frame::{LabelSet, LandmarkFrame};
use crate::parallel;
use crate::pose::PoseSampler;
use crate::training::{CellKey, ConditionalBank, StaticBank};

/// Largest-remainder apportionment of `total` over `weights`. Keys are
/// expected in ascending order; remainder ties go to the earlier key. When
/// every weight is zero the trees are spread uniformly.
pub fn allocate_trees<K: Copy>(total: usize, weights: &[(K, f64)]) -> Result<Vec<(K, usize)>> {
    if total == 0 {
        return Err(Error::ZeroTrees);
    }
    if weights.is_empty() {
        return Err(Error::Config("no cells to allocate trees to".into()));
    }
    if let Some((_, w)) = weights.iter().find(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Config(format!("invalid allocation weight {w}")));
    }
    let sum: f64 = weights.iter().map(|(_, w)| w).sum();
    let quotas: Vec<f64> = if sum > 0.0 {
        weights
            .iter()
            .map(|(_, w)| total as f64 * w / sum)
            .collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(weights
        .iter()
        .zip(counts)
        .map(|(&(k, _), c)| (k, c))
        .collect())
}

/// Draws `count` trees from a cell of `cell_size` trees, returned as
/// ascending `(tree, multiplicity)`. Up to `cell_size` the draw is without
/// replacement; larger counts take every tree `count / cell_size` times and
/// the remainder without replacement.
pub fn sample_trees<R: Rng + ?Sized>(
    count: usize,
    cell_size: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    if count == 0 || cell_size == 0 {
        return Vec::new();
    }
    let rounds = count / cell_size;
    let rest = count % cell_size;
    let mut extra = if rest > 0 {
        index::sample(rng, cell_size, rest).into_vec()
    } else {
        Vec::new()
    };
    extra.sort_unstable();
    if rounds == 0 {
        return extra.into_iter().map(|t| (t, 1)).collect();
    }
    let mut out: Vec<(usize, usize)> = (0..cell_size).map(|t| (t, rounds)).collect();
    for t in extra {
        out[t].1 += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Priors are the static model's output for each previous frame.
    Static,
    /// Priors are the model's own earlier outputs.
    Dynamic,
}

/// Temporal integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Lookback in frames.
    pub length: usize,
    /// Stride between paired previous frames.
    pub step: usize,
    pub prior_mode: PriorMode,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            length: 60,
            step: 6,
            prior_mode: PriorMode::Dynamic,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.step == 0 {
            return Err(Error::Config(
                "window length and step must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Positions paired with frame `n`, most recent first: `n - step`,
    /// `n - 2 step`, ... within the lookback. Before the first stride all
    /// earlier frames are used.
    pub fn previous_positions(&self, n: usize) -> Vec<usize> {
        if n == 0 {
            return Vec::new();
        }
        if n < self.step {
            return (n.saturating_sub(self.length)..n).rev().collect();
        }
        (1..)
            .map(|k| k * self.step)
            .take_while(|&d| d <= self.length && d <= n)
            .map(|d| n - d)
            .collect()
    }

    /// Largest number of pairs per frame.
    pub fn max_pairs(&self) -> usize {
        (self.length / self.step).max(1)
    }
}

struct Buffered<'a> {
    position: usize,
    frame: &'a LandmarkFrame,
    prior: Vec<f64>,
}

/// Recent frames of one sequence with their stored priors, plus every
/// output produced so far.
pub struct SequenceState<'a> {
    cfg: WindowConfig,
    buffer: VecDeque<Buffered<'a>>,
    outputs: Vec<Vec<f64>>,
}

impl<'a> SequenceState<'a> {
    pub fn new(cfg: WindowConfig) -> Self {
        SequenceState {
            cfg,
            buffer: VecDeque::with_capacity(cfg.length + 1),
            outputs: Vec::new(),
        }
    }

    /// Number of frames processed.
    pub fn position(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn into_outputs(self) -> Vec<Vec<f64>> {
        self.outputs
    }

    /// Previous frames paired with the next frame, with their priors.
    pub fn previous(&self) -> Vec<(&'a LandmarkFrame, &[f64])> {
        let first = self.buffer.front().map_or(0, |b| b.position);
        self.cfg
            .previous_positions(self.position())
            .into_iter()
            .filter_map(|m| self.buffer.get(m.checked_sub(first)?))
            .map(|b| (b.frame, b.prior.as_slice()))
            .collect()
    }

    fn push(&mut self, frame: &'a LandmarkFrame, output: Vec<f64>, prior: Vec<f64>) {
        debug_assert!((prior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let position = self.position();
        if self.buffer.len() > self.cfg.length {
            self.buffer.pop_front();
        }
        self.buffer.push_back(Buffered {
            position,
            frame,
            prior,
        });
        self.outputs.push(output);
    }
}

/// Mean prediction of all trees on the frame alone.
pub fn predict_static(forest: &Forest<Feature>, frame: &LandmarkFrame) -> Vec<f64> {
    forest.predict(&FeatureInput::single(frame))
}

/// Mean over previous frames of the full pairwise forest's prediction.
pub fn predict_full(
    forest: &Forest<Feature>,
    previous: &[&LandmarkFrame],
    frame: &LandmarkFrame,
) -> Vec<f64> {
    let per_pair = parallel::map_slice(previous, |prev| {
        forest.predict(&FeatureInput::pair(prev, frame))
    });
    mean_of(per_pair, forest.n_labels())
}

fn mean_of(rows: Vec<Vec<f64>>, n_labels: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_labels];
    for row in &rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Trees drawn for one pair: `(cell, tree, multiplicity)`.
type Draw = Vec<(CellKey, usize, usize)>;

fn draw_cells(
    bank: &ConditionalBank,
    prior: &[f64],
    pose_weights: Option<&[f64]>,
    trees: usize,
    rng: &mut TreeRng,
) -> Result<Draw> {
    let weights: Vec<(CellKey, f64)> = bank
        .cells
        .keys()
        .map(|&k| {
            let pose = pose_weights.map_or(1.0, |w| w[k.bin]);
            (k, pose * prior[k.source])
        })
        .collect();
    let mut draw = Vec::new();
    for (key, count) in allocate_trees(trees, &weights)? {
        let cell = &bank.cells[&key];
        for (t, mult) in sample_trees(count, cell.len(), rng) {
            draw.push((key, t, mult));
        }
    }
    Ok(draw)
}

fn mix(
    bank: &ConditionalBank,
    previous: &[(&LandmarkFrame, &[f64])],
    frame: &LandmarkFrame,
    pose_weights: Option<&[f64]>,
    trees: usize,
    rng: &mut TreeRng,
) -> Result<Vec<f64>> {
    if previous.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n_labels = bank.labels.len();
    let draws = previous
        .iter()
        .map(|(_, prior)| draw_cells(bank, prior, pose_weights, trees, rng))
        .collect::<Result<Vec<_>>>()?;
    let per_pair = parallel::map_indexed(previous.len(), |m| {
        let input = FeatureInput::pair(previous[m].0, frame);
        let mut acc = vec![0.0; n_labels];
        for &(key, t, mult) in &draws[m] {
            let p = bank.cells[&key].trees()[t].predict(&input);
            let w = mult as f64;
            for (a, v) in acc.iter_mut().zip(p) {
                *a += w * v;
            }
        }
        acc
    });
    let mut total = vec![0.0; n_labels];
    for row in &per_pair {
        for (a, v) in total.iter_mut().zip(row) {
            *a += v;
        }
    }
    let norm = (previous.len() * trees) as f64;
    total.iter_mut().for_each(|a| *a /= norm);
    Ok(total)
}

/// Conditional model: for every previous frame, `trees` trees are
/// apportioned over source labels by that frame's prior and sampled from
/// the corresponding forests; all sampled outputs are averaged.
pub fn predict_conditional(
    bank: &ConditionalBank,
    previous: &[(&LandmarkFrame, &[f64])],
    frame: &LandmarkFrame,
    trees: usize,
    rng: &mut TreeRng,
) -> Result<Vec<f64>> {
    let uniform = vec![1.0; bank.bins.len()];
    let pose = bank.is_multiview().then_some(uniform.as_slice());
    mix(bank, previous, frame, pose, trees, rng)
}

/// Pose-bin weights of a frame; uniform without a pose estimate.
pub fn pose_weights(sampler: &PoseSampler, frame: &LandmarkFrame) -> Vec<f64> {
    match frame.pose {
        Some(p) => sampler.sample_weights(p),
        None => {
            debug!(
                "frame {} has no pose; using uniform bin weights",
                frame.frame_index
            );
            vec![1.0 / sampler.bins() as f64; sampler.bins()]
        }
    }
}

fn check_bins(sampler: &PoseSampler, bins: usize) -> Result<()> {
    if sampler.bins() != bins {
        return Err(Error::Config(format!(
            "pose sampler has {} bins, model has {bins}",
            sampler.bins()
        )));
    }
    Ok(())
}

/// Multi-view conditional model: cell weights are the product of the pose
/// weight of the current frame and the prior of each previous frame.
pub fn predict_multiview(
    bank: &ConditionalBank,
    sampler: &PoseSampler,
    previous: &[(&LandmarkFrame, &[f64])],
    frame: &LandmarkFrame,
    trees: usize,
    rng: &mut TreeRng,
) -> Result<Vec<f64>> {
    check_bins(sampler, bank.bins.len())?;
    let w = pose_weights(sampler, frame);
    mix(bank, previous, frame, Some(&w), trees, rng)
}

/// Multi-view static model: trees apportioned over pose bins only.
pub fn predict_mvrf(
    bank: &StaticBank,
    sampler: &PoseSampler,
    frame: &LandmarkFrame,
    trees: usize,
    rng: &mut TreeRng,
) -> Result<Vec<f64>> {
    check_bins(sampler, bank.bins.len())?;
    let w = pose_weights(sampler, frame);
    let weights: Vec<(usize, f64)> = bank.cells.keys().map(|&b| (b, w[b])).collect();
    let input = FeatureInput::single(frame);
    let mut acc = vec![0.0; bank.labels.len()];
    for (bin, count) in allocate_trees(trees, &weights)? {
        let cell = &bank.cells[&bin];
        for (t, mult) in sample_trees(count, cell.len(), rng) {
            let m = mult as f64;
            for (a, v) in acc.iter_mut().zip(cell.trees()[t].predict(&input)) {
                *a += m * v;
            }
        }
    }
    acc.iter_mut().for_each(|a| *a /= trees as f64);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Full,
    Pcrf,
    Mvrf,
    Mvpcrf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Rf,
        ModelKind::Full,
        ModelKind::Pcrf,
        ModelKind::Mvrf,
        ModelKind::Mvpcrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Full => "full",
            ModelKind::Pcrf => "pcrf",
            ModelKind::Mvrf => "mvrf",
            ModelKind::Mvpcrf => "mvpcrf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Borrowed view of the trained parts a model needs.
#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    Static(&'a Forest<Feature>),
    Full {
        init: &'a Forest<Feature>,
        pair: &'a Forest<Feature>,
    },
    Conditional {
        init: &'a Forest<Feature>,
        bank: &'a ConditionalBank,
    },
    Mvrf {
        bank: &'a StaticBank,
        sampler: &'a PoseSampler,
    },
    Mvpcrf {
        init: &'a StaticBank,
        bank: &'a ConditionalBank,
        sampler: &'a PoseSampler,
    },
}

impl<'a> ModelRef<'a> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelRef::Static(_) => ModelKind::Rf,
            ModelRef::Full { .. } => ModelKind::Full,
            ModelRef::Conditional { .. } => ModelKind::Pcrf,
            ModelRef::Mvrf { .. } => ModelKind::Mvrf,
            ModelRef::Mvpcrf { .. } => ModelKind::Mvpcrf,
        }
    }

    pub fn labels(&self) -> &'a LabelSet {
        match *self {
            ModelRef::Static(f) => &f.labels,
            ModelRef::Full { pair, .. } => &pair.labels,
            ModelRef::Conditional { bank, .. } | ModelRef::Mvpcrf { bank, .. } => &bank.labels,
            ModelRef::Mvrf { bank, .. } => &bank.labels,
        }
    }

    /// Trees evaluated per pair (or per frame for static models) by default.
    pub fn default_trees(&self) -> usize {
        match *self {
            ModelRef::Static(f) | ModelRef::Full { pair: f, .. } => f.len(),
            ModelRef::Conditional { bank, .. } | ModelRef::Mvpcrf { bank, .. } => bank.hp.n_trees,
            ModelRef::Mvrf { bank, .. } => bank.hp.n_trees,
        }
    }
}

const INIT_STREAM: u64 = 0x1A17;

/// Runs a model causally over the frames of one sequence.
pub struct Runner<'a> {
    pub model: ModelRef<'a>,
    pub window: WindowConfig,
    /// Trees per pair for sampled models.
    pub trees: usize,
    pub seed: u64,
}

impl<'a> Runner<'a> {
    pub fn new(model: ModelRef<'a>, window: WindowConfig, seed: u64) -> Self {
        Runner {
            model,
            window,
            trees: model.default_trees(),
            seed,
        }
    }

    pub fn with_trees(mut self, trees: usize) -> Self {
        self.trees = trees;
        self
    }

    fn init_prediction(&self, frame: &LandmarkFrame, n: usize) -> Result<Vec<f64>> {
        match self.model {
            ModelRef::Static(f)
            | ModelRef::Full { init: f, .. }
            | ModelRef::Conditional { init: f, .. } => Ok(predict_static(f, frame)),
            ModelRef::Mvrf { bank, sampler }
            | ModelRef::Mvpcrf {
                init: bank,
                sampler,
                ..
            } => {
                let mut rng = tree_rng(derive_seed(self.seed, INIT_STREAM), n as u64);
                predict_mvrf(bank, sampler, frame, bank.hp.n_trees, &mut rng)
            }
        }
    }

    /// Predicts the next frame and appends it to `state`.
    pub fn step(
        &self,
        state: &mut SequenceState<'a>,
        frame: &'a LandmarkFrame,
    ) -> Result<Vec<f64>> {
        let n = state.position();
        let mut rng = tree_rng(self.seed, n as u64);
        let previous = state.previous();
        let first = previous.is_empty();
        let output = match self.model {
            ModelRef::Static(f) => predict_static(f, frame),
            ModelRef::Mvrf { bank, sampler } => {
                predict_mvrf(bank, sampler, frame, self.trees, &mut rng)?
            }
            _ if first => self.init_prediction(frame, n)?,
            ModelRef::Full { pair, .. } => {
                let frames: Vec<&LandmarkFrame> = previous.iter().map(|p| p.0).collect();
                predict_full(pair, &frames, frame)
            }
            ModelRef::Conditional { bank, .. } => {
                predict_conditional(bank, &previous, frame, self.trees, &mut rng)?
            }
            ModelRef::Mvpcrf { bank, sampler, .. } => {
                predict_multiview(bank, sampler, &previous, frame, self.trees, &mut rng)?
            }
        };
        let prior = match self.window.prior_mode {
            PriorMode::Dynamic => output.clone(),
            PriorMode::Static if first => output.clone(),
            PriorMode::Static => self.init_prediction(frame, n)?,
        };
        state.push(frame, output.clone(), prior);
        Ok(output)
    }

    /// Per-frame probability trace of a sequence.
    pub fn run(&self, frames: &'a [LandmarkFrame]) -> Result<Vec<Vec<f64>>> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        self.window.validate()?;
        let mut state = SequenceState::new(self.window);
        for f in frames {
            self.step(&mut state, f)?;
        }
        Ok(state.into_outputs())
    }
}

/// Sequence decision from a probability trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub label: usize,
    pub frame: usize,
    pub probability: f64,
}

/// Label of the global maximum of `trace` over frames and the labels
/// allowed by `mask`; ties go to the earliest frame, then the lowest label.
pub fn decide(trace: &[Vec<f64>], mask: &[bool]) -> Result<Decision> {
    let mut best: Option<Decision> = None;
    for (n, p) in trace.iter().enumerate() {
        for (l, &v) in p.iter().enumerate() {
            if !mask.get(l).copied().unwrap_or(false) {
                continue;
            }
            if best.as_ref().is_none_or(|b| v > b.probability) {
                best = Some(Decision {
                    label: l,
                    frame: n,
                    probability: v,
                });
            }
        }
    }
    best.ok_or(Error::EmptySequence)
}

/// Labels eligible for the sequence decision: all but the neutral label.
pub fn decision_mask(labels: &LabelSet) -> Vec<bool> {
    (0..labels.len())
        .map(|l| Some(l) != labels.neutral)
        .collect()
}

/// Runs `runner` over a sequence and decides its label.
pub fn classify_sequence<'a>(
    runner: &Runner<'a>,
    frames: &'a [LandmarkFrame],
    mask: &[bool],
) -> Result<(Decision, Vec<Vec<f64>>)> {
    let trace = runner.run(frames)?;
    Ok((decide(&trace, mask)?, trace))
}

/// Index of the most probable label of one frame.
pub fn frame_label(p: &[f64]) -> usize {
    argmax(p)
}

/// CSV trace: `sequence,frame_index,model,yaw,pitch,p_<label>...`.
pub fn write_trace_header<W: Write>(out: &mut W, labels: &LabelSet) -> Result<()> {
    write!(out, "sequence,frame_index,model,yaw,pitch")?;
    for name in &labels.names {
        write!(out, ",p_{name}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn write_trace_rows<W: Write>(
    out: &mut W,
    sequence: &str,
    kind: ModelKind,
    frames: &[LandmarkFrame],
    trace: &[Vec<f64>],
) -> Result<()> {
    for (f, p) in frames.iter().zip(trace) {
        let (yaw, pitch) = f.pose.map_or((String::new(), String::new()), |p| {
            (p.yaw.to_string(), p.pitch.to_string())
        });
        write!(
            out,
            "{sequence},{},{},{yaw},{pitch}",
            f.frame_index,
            kind.name()
        )?;
        for v in p {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
