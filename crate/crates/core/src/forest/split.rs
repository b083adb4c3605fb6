use super::impurity::weighted_gini;
use super::{CandidateGroup, SplitFeature};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub group: usize,
    pub threshold_index: usize,
    /// Group-major flat candidate index.
    pub flat_index: usize,
    pub threshold: f64,
    pub impurity: f64,
}

/// Picks the candidate minimizing the size-weighted Gini impurity of the
/// induced split (`value < threshold` goes left). Candidates leaving fewer
/// than `min_samples_leaf` samples on either side are skipped; ties go to
/// the lowest flat index. Returns `None` when every candidate is skipped.
///
/// Each group's feature is evaluated once per sample; the thresholds are
/// then scored together from a bucketed label histogram.
pub fn best_split<I, F>(
    inputs: &[I],
    labels: &[usize],
    samples: &[u32],
    n_labels: usize,
    groups: &[CandidateGroup<F>],
    min_samples_leaf: usize,
) -> Option<SplitChoice>
where
    F: SplitFeature<I>,
{
    let n = samples.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mut totals = vec![0usize; n_labels];
    for &s in samples {
        totals[labels[s as usize]] += 1;
    }

    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = Vec::new();
    let mut sorted: Vec<f64> = Vec::new();
    let mut hist: Vec<usize> = Vec::new();
    let mut left = vec![0usize; n_labels];
    let mut right = vec![0usize; n_labels];
    let mut offset = 0;

    for (g, group) in groups.iter().enumerate() {
        let k = group.thresholds.len();
        if k == 0 {
            continue;
        }
        order.clear();
        order.extend(0..k);
        order.sort_by(|&a, &b| {
            group.thresholds[a]
                .total_cmp(&group.thresholds[b])
                .then(a.cmp(&b))
        });
        sorted.clear();
        sorted.extend(order.iter().map(|&i| group.thresholds[i]));

        // hist[b][l]: samples whose value is >= exactly b sorted thresholds.
        hist.clear();
        hist.resize((k + 1) * n_labels, 0);
        for &s in samples {
            let v = group.feature.evaluate(&inputs[s as usize]);
            let bucket = if v.is_nan() {
                k
            } else {
                sorted.partition_point(|&t| t <= v)
            };
            hist[bucket * n_labels + labels[s as usize]] += 1;
        }

        left.iter_mut().for_each(|c| *c = 0);
        let mut n_left = 0;
        for (j, &orig) in order.iter().enumerate() {
            // Sorted threshold j sends buckets 0..=j left.
            for l in 0..n_labels {
                let c = hist[j * n_labels + l];
                left[l] += c;
                n_left += c;
            }
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            for l in 0..n_labels {
                right[l] = totals[l] - left[l];
            }
            let impurity = weighted_gini(&left, &right);
            let flat_index = offset + orig;
            let better = match best {
                None => true,
                Some(b) => {
                    impurity < b.impurity || (impurity == b.impurity && flat_index < b.flat_index)
                }
            };
            if better {
                best = Some(SplitChoice {
                    group: g,
                    threshold_index: orig,
                    flat_index,
                    threshold: group.thresholds[orig],
                    impurity,
                });
            }
        }
        offset += k;
    }
    best
}
