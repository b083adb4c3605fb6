use rand::seq::index;
use rand::Rng;

/// A subject-level, class-balanced bootstrap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedBootstrap {
    /// Selected sample indices, ascending.
    pub samples: Vec<u32>,
    /// Drawn subjects, ascending.
    pub subjects: Vec<usize>,
    /// Labels present in the data but absent from the drawn pool.
    pub missing_labels: Vec<usize>,
}

/// Draws `ceil(data_ratio * |subjects|)` subjects without replacement, pools
/// their samples and downsamples every label to the minority count of the
/// pool.
pub fn build_balanced_bootstrap<R: Rng + ?Sized>(
    subjects: &[usize],
    labels: &[usize],
    n_labels: usize,
    data_ratio: f64,
    rng: &mut R,
) -> BalancedBootstrap {
    let universe = distinct(subjects);
    let drawn = draw_subjects(&universe, data_ratio, rng);
    let mut in_draw = vec![false; universe.last().map_or(0, |&s| s + 1)];
    for &s in &drawn {
        in_draw[s] = true;
    }

    let mut by_label: Vec<Vec<u32>> = vec![Vec::new(); n_labels];
    let mut present = vec![false; n_labels];
    for (i, (&s, &l)) in subjects.iter().zip(labels).enumerate() {
        present[l] = true;
        if in_draw[s] {
            by_label[l].push(i as u32);
        }
    }
    let (samples, missing_labels) = balance(by_label, &present, rng);
    BalancedBootstrap {
        samples,
        subjects: drawn,
        missing_labels,
    }
}

pub(crate) fn distinct(values: &[usize]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// `ceil(ratio * n)` distinct entries of `universe`, ascending.
pub fn draw_subjects<R: Rng + ?Sized>(universe: &[usize], ratio: f64, rng: &mut R) -> Vec<usize> {
    let n = universe.len();
    let k = ((ratio * n as f64).ceil() as usize).clamp(usize::from(n > 0), n);
    let mut drawn: Vec<usize> = index::sample(rng, n, k)
        .into_iter()
        .map(|i| universe[i])
        .collect();
    drawn.sort_unstable();
    drawn
}

/// Downsamples each nonempty bucket to the smallest nonempty bucket size.
/// Returns the merged ascending indices and the labels that were expected
/// (`present`) but empty.
pub fn balance<R: Rng + ?Sized>(
    by_label: Vec<Vec<u32>>,
    present: &[bool],
    rng: &mut R,
) -> (Vec<u32>, Vec<usize>) {
    let missing = (0..by_label.len())
        .filter(|&l| present[l] && by_label[l].is_empty())
        .collect();
    let minority = by_label
        .iter()
        .map(Vec::len)
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    let mut out = Vec::with_capacity(minority * by_label.len());
    for bucket in by_label {
        if bucket.len() <= minority {
            out.extend(bucket);
        } else {
            let mut picks: Vec<usize> = index::sample(rng, bucket.len(), minority).into_vec();
            picks.sort_unstable();
            out.extend(picks.into_iter().map(|i| bucket[i]));
        }
    }
    out.sort_unstable();
    (out, missing)
}
