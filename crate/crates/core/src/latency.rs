//! Per-frame latency measurement for channel building and model evaluation.

use std::time::Instant;

use image::GrayImage;
use serde::Serialize;

use crate::channels::build_channels;
use crate::error::{Error, Result};
use crate::features::Feature;
use crate::forest::Forest;
use crate::frame::LandmarkFrame;
use crate::inference::{ModelRef, Runner, SequenceState, WindowConfig};
use crate::model::ModelBundle;
use crate::training::ConditionalBank;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_durations(ms: &[f64]) -> Result<Self> {
        if ms.is_empty() {
            return Err(Error::Config("no latency samples".into()));
        }
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Ok(LatencyStats {
            samples: ms.len(),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p95_ms: sorted[rank - 1],
            max_ms: sorted[sorted.len() - 1],
        })
    }
}

/// Forest whose trees are the trees of `forest` repeated cyclically up to
/// `n` trees. Every copy is a separate tree and is evaluated separately,
/// so the result times like a forest of `n` trained trees.
pub fn replicate_forest(forest: &Forest<Feature>, n: usize) -> Forest<Feature> {
    let k = forest.len();
    let trees = (0..n).map(|i| forest.trees()[i % k].clone()).collect();
    let boots = (0..n)
        .map(|i| forest.bootstrap_subjects(i % k).to_vec())
        .collect();
    Forest::new(forest.labels.clone(), forest.subjects.clone(), trees, boots)
}

fn replicate_bank(bank: &ConditionalBank, n: usize) -> ConditionalBank {
    let mut out = bank.clone();
    for f in out.cells.values_mut() {
        *f = replicate_forest(f, n);
    }
    out.hp.n_trees = n;
    out
}

/// Copy of `bundle` whose every forest holds `n` trees.
pub fn with_forest_size(bundle: &ModelBundle, n: usize) -> ModelBundle {
    let mut out = bundle.clone();
    for t in [&mut out.static_forest, &mut out.full]
        .into_iter()
        .flatten()
    {
        t.forest = replicate_forest(&t.forest, n);
        t.hp.n_trees = n;
    }
    for b in [&mut out.bank, &mut out.multiview_bank]
        .into_iter()
        .flatten()
    {
        *b = replicate_bank(b, n);
    }
    if let Some(b) = &mut out.multiview_static {
        for f in b.cells.values_mut() {
            *f = replicate_forest(f, n);
        }
        b.hp.n_trees = n;
    }
    out
}

/// Time of every `Runner::step` over the given sequences, in milliseconds.
pub fn time_model(
    model: ModelRef<'_>,
    sequences: &[&[LandmarkFrame]],
    window: WindowConfig,
    trees: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    window.validate()?;
    let runner = Runner::new(model, window, seed).with_trees(trees);
    let mut out = Vec::new();
    for frames in sequences {
        let mut state = SequenceState::new(window);
        for f in frames.iter() {
            let start = Instant::now();
            runner.step(&mut state, f)?;
            out.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(out)
}

/// Time of building the integral channels of every image, in milliseconds.
pub fn time_channels(images: &[GrayImage]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    for img in images {
        let start = Instant::now();
        let ch = build_channels(img)?;
        out.push(start.elapsed().as_secs_f64() * 1e3);
        drop(ch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_known_samples() {
        let ms: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = LatencyStats::from_durations(&ms).unwrap();
        assert_eq!(s.mean_ms, 50.5);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.max_ms, 100.0);
        assert!(LatencyStats::from_durations(&[]).is_err());
    }
}
