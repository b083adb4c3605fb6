//! Sequence-level evaluation: run a model over every sequence of a dataset
//! and score the decisions.

use std::borrow::Cow;
use std::ops::Range;

use serde::Serialize;

use crate::error::Result;
use crate::forest::derive_seed;
use crate::frame::{Dataset, LandmarkFrame};
use crate::inference::{
    classify_sequence, decision_mask, Decision, ModelRef, Runner, WindowConfig,
};
use crate::parallel;

/// Decision and trace of one sequence.
#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub sequence: usize,
    pub frames: Range<usize>,
    pub truth: usize,
    pub decision: Decision,
    pub trace: Vec<Vec<f64>>,
}

impl SequenceOutcome {
    pub fn correct(&self) -> bool {
        self.truth == self.decision.label
    }
}

/// Inference settings shared by every sequence of an evaluation.
#[derive(Debug, Clone, Copy)]
#[derive(Default)]
pub struct EvalConfig {
    pub window: WindowConfig,
    /// Trees per pair; `None` uses the model default.
    pub trees: Option<usize>,
    pub seed: u64,
}


/// Classifies every sequence of `ds` that has a ground-truth label.
/// Sequence `i` samples trees from `derive_seed(seed, i)`.
pub fn evaluate(
    model: ModelRef<'_>,
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<Vec<SequenceOutcome>> {
    evaluate_with(model, ds, cfg, |frames| Ok(Cow::Borrowed(frames)))
}

/// [`evaluate`] with a per-sequence preparation step, e.g. attaching image
/// channels to one sequence at a time.
pub fn evaluate_with<P>(
    model: ModelRef<'_>,
    ds: &Dataset,
    cfg: &EvalConfig,
    prepare: P,
) -> Result<Vec<SequenceOutcome>>
where
    P: for<'f> Fn(&'f [LandmarkFrame]) -> Result<Cow<'f, [LandmarkFrame]>> + Sync + Send,
{
    let mask = decision_mask(model.labels());
    let ranges: Vec<(Range<usize>, usize)> = ds
        .sequence_ranges()
        .into_iter()
        .filter_map(|r| ds.sequence_label(r.clone()).map(|l| (r, l)))
        .collect();
    let outcomes = parallel::map_slice(&ranges, |(range, truth)| {
        let sequence = ds.frames[range.start].sequence;
        let mut runner = Runner::new(model, cfg.window, derive_seed(cfg.seed, sequence as u64));
        if let Some(t) = cfg.trees {
            runner = runner.with_trees(t);
        }
        let frames = prepare(&ds.frames[range.clone()])?;
        let (decision, trace) = classify_sequence(&runner, &frames, &mask)?;
        Ok(SequenceOutcome {
            sequence,
            frames: range.clone(),
            truth: *truth,
            decision,
            trace,
        })
    });
    outcomes.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub sequences: usize,
    pub accuracy: f64,
    /// Unweighted mean of the defined per-label F1 scores.
    pub macro_f1: f64,
    /// One-vs-rest F1 per label; `None` when the label never occurs in
    /// either the truth or the decisions.
    pub f1: Vec<Option<f64>>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, per-label F1 and confusion of `(truth, predicted)` pairs.
pub fn metrics(pairs: &[(usize, usize)], n_labels: usize) -> Metrics {
    let mut confusion = vec![vec![0usize; n_labels]; n_labels];
    for &(t, p) in pairs {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_labels).map(|l| confusion[l][l]).sum();
    let f1: Vec<Option<f64>> = (0..n_labels)
        .map(|l| {
            let tp = confusion[l][l] as f64;
            let fp = (0..n_labels)
                .filter(|&t| t != l)
                .map(|t| confusion[t][l])
                .sum::<usize>() as f64;
            let fn_ = (0..n_labels)
                .filter(|&p| p != l)
                .map(|p| confusion[l][p])
                .sum::<usize>() as f64;
            (tp + fp + fn_ > 0.0).then(|| 2.0 * tp / (2.0 * tp + fp + fn_))
        })
        .collect();
    let defined: Vec<f64> = f1.iter().flatten().copied().collect();
    Metrics {
        sequences: pairs.len(),
        accuracy: if pairs.is_empty() {
            0.0
        } else {
            correct as f64 / pairs.len() as f64
        },
        macro_f1: if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        },
        f1,
        confusion,
    }
}

pub fn outcome_metrics(outcomes: &[SequenceOutcome], n_labels: usize) -> Metrics {
    let pairs: Vec<(usize, usize)> = outcomes
        .iter()
        .map(|o| (o.truth, o.decision.label))
        .collect();
    metrics(&pairs, n_labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = metrics(&[(1, 1), (2, 2), (2, 2)], 3);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, vec![None, Some(1.0), Some(1.0)]);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn f1_by_hand() {
        // label 1: tp 1, fp 1, fn 1 -> 0.5; label 2: tp 0, fp 1, fn 1 -> 0
        let m = metrics(&[(1, 1), (1, 2), (2, 1)], 3);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.f1[1], Some(0.5));
        assert_eq!(m.f1[2], Some(0.0));
        assert_eq!(m.macro_f1, 0.25);
        assert_eq!(m.confusion[1][2], 1);
    }
}
