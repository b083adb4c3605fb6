use serde::Serialize;

use super::tree::{grow_tree, Tree, TreeCaps};
use super::{argmax, tree_rng, CandidateSource, SplitFeature, TreeRng};
use crate::frame::LabelSet;
use crate::parallel;

/// Training data drawn for one tree.
#[derive(Debug, Clone)]
pub struct Bootstrap<I> {
    pub inputs: Vec<I>,
    pub labels: Vec<usize>,
    /// Subjects drawn for this tree (indices into the forest subject table).
    pub subjects: Vec<usize>,
    pub missing_labels: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GrowthReport {
    pub trees: usize,
    pub mean_bootstrap_size: f64,
    /// Trees grown without some label, with the labels they lacked.
    pub trees_missing_labels: Vec<(usize, Vec<usize>)>,
}

/// Grows `n_trees` trees; tree `t` uses its own generator seeded from
/// `(seed, t)` for both its bootstrap and its growth, so results do not
/// depend on scheduling.
pub fn grow_forest<I, F, S, B>(
    n_trees: usize,
    n_labels: usize,
    caps: TreeCaps,
    source: &S,
    seed: u64,
    make_bootstrap: B,
) -> (Vec<Tree<F>>, Vec<Vec<usize>>, GrowthReport)
where
    F: SplitFeature<I> + Clone + Send,
    S: CandidateSource<F> + Sync,
    B: Fn(&mut TreeRng) -> Bootstrap<I> + Sync + Send,
{
    let grown = parallel::map_indexed(n_trees, |t| {
        let mut rng = tree_rng(seed, t as u64);
        let boot = make_bootstrap(&mut rng);
        let samples = (0..boot.inputs.len() as u32).collect();
        let tree = grow_tree(
            &boot.inputs,
            &boot.labels,
            samples,
            n_labels,
            source,
            caps,
            &mut rng,
        );
        (tree, boot.subjects, boot.missing_labels, boot.inputs.len())
    });
    let mut report = GrowthReport {
        trees: n_trees,
        ..Default::default()
    };
    let mut trees = Vec::with_capacity(n_trees);
    let mut subjects = Vec::with_capacity(n_trees);
    let mut total = 0usize;
    for (t, (tree, subj, missing, size)) in grown.into_iter().enumerate() {
        if !missing.is_empty() {
            report.trees_missing_labels.push((t, missing));
        }
        total += size;
        trees.push(tree);
        subjects.push(subj);
    }
    report.mean_bootstrap_size = if n_trees > 0 {
        total as f64 / n_trees as f64
    } else {
        0.0
    };
    (trees, subjects, report)
}

/// An ensemble of trees with the subjects each tree was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest<F> {
    pub labels: LabelSet,
    /// Subject name table referenced by the bootstraps.
    pub subjects: Vec<String>,
    trees: Vec<Tree<F>>,
    bootstraps: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OobReport {
    pub accuracy: f64,
    pub evaluated: usize,
    /// Samples whose subject was in every tree's bootstrap.
    pub skipped: usize,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl<F> Forest<F> {
    pub fn new(
        labels: LabelSet,
        subjects: Vec<String>,
        trees: Vec<Tree<F>>,
        bootstraps: Vec<Vec<usize>>,
    ) -> Self {
        assert_eq!(trees.len(), bootstraps.len());
        Forest {
            labels,
            subjects,
            trees,
            bootstraps,
        }
    }

    pub fn trees(&self) -> &[Tree<F>] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn bootstrap_subjects(&self, tree: usize) -> &[usize] {
        &self.bootstraps[tree]
    }

    /// Maps external subject names onto this forest's subject table.
    pub fn subject_lookup(&self, names: &[String]) -> Vec<Option<usize>> {
        names
            .iter()
            .map(|n| self.subjects.iter().position(|s| s == n))
            .collect()
    }

    /// Mean of the per-tree leaf distributions.
    pub fn predict<I: ?Sized>(&self, input: &I) -> Vec<f64>
    where
        F: SplitFeature<I>,
    {
        let mut acc = vec![0.0; self.n_labels()];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.predict(input)) {
                *a += p;
            }
        }
        let t = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        acc
    }

    /// Out-of-bag scoring: each sample is scored only by trees whose
    /// bootstrap excluded its subject (`None` = subject unknown to the
    /// forest, every tree is eligible).
    pub fn oob<I>(&self, inputs: &[I], labels: &[usize], subjects: &[Option<usize>]) -> OobReport
    where
        F: SplitFeature<I> + Sync,
        I: Sync,
    {
        let n_labels = self.n_labels();
        let mut membership = vec![vec![false; self.subjects.len()]; self.trees.len()];
        for (t, boot) in self.bootstraps.iter().enumerate() {
            for &s in boot {
                membership[t][s] = true;
            }
        }
        let predictions = parallel::map_indexed(inputs.len(), |i| {
            let mut acc = vec![0.0; n_labels];
            let mut used = 0;
            for (t, tree) in self.trees.iter().enumerate() {
                if subjects[i].is_some_and(|s| membership[t][s]) {
                    continue;
                }
                used += 1;
                for (a, p) in acc.iter_mut().zip(tree.predict(&inputs[i])) {
                    *a += p;
                }
            }
            (used > 0).then(|| argmax(&acc))
        });
        let mut confusion = vec![vec![0; n_labels]; n_labels];
        let (mut evaluated, mut skipped, mut correct) = (0, 0, 0);
        for (pred, &truth) in predictions.into_iter().zip(labels) {
            match pred {
                Some(p) => {
                    evaluated += 1;
                    correct += usize::from(p == truth);
                    confusion[truth][p] += 1;
                }
                None => skipped += 1,
            }
        }
        OobReport {
            accuracy: if evaluated > 0 {
                correct as f64 / evaluated as f64
            } else {
                0.0
            },
            evaluated,
            skipped,
            confusion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{build_balanced_bootstrap, CandidateGroup, TreeCaps};
    use rand::Rng;

    #[derive(Debug, Clone, PartialEq)]
    struct Column(usize);

    impl SplitFeature<Vec<f64>> for Column {
        fn evaluate(&self, input: &Vec<f64>) -> f64 {
            input[self.0]
        }
    }

    struct Source;

    impl CandidateSource<Column> for Source {
        fn generate(&self, rng: &mut TreeRng) -> Vec<CandidateGroup<Column>> {
            vec![CandidateGroup {
                feature: Column(rng.gen_range(0..2)),
                thresholds: (0..8).map(|_| rng.gen_range(-1.0..2.0)).collect(),
            }]
        }
    }

    fn labels(n: usize) -> LabelSet {
        LabelSet::new((0..n).map(|i| i.to_string()).collect(), None)
    }

    fn constant_tree(label: usize, n: usize) -> Tree<Column> {
        let inputs = vec![vec![0.0, 0.0]];
        grow_tree(
            &inputs,
            &[label],
            vec![0],
            n,
            &Source,
            TreeCaps::default(),
            &mut tree_rng(0, 0),
        )
    }

    #[test]
    fn unanimous_forest_is_one_hot() {
        let trees = vec![constant_tree(2, 4), constant_tree(2, 4)];
        let f = Forest::new(labels(4), vec![], trees, vec![vec![], vec![]]);
        assert_eq!(f.predict(&vec![0.3, 0.1]), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn split_vote_averages() {
        let trees = vec![constant_tree(0, 3), constant_tree(1, 3)];
        let f = Forest::new(labels(3), vec![], trees, vec![vec![], vec![]]);
        assert_eq!(f.predict(&vec![0.0, 0.0]), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn sample_of_only_bootstrap_subject_is_skipped() {
        let trees = vec![constant_tree(0, 2)];
        let f = Forest::new(labels(2), vec!["a".into()], trees, vec![vec![0]]);
        let r = f.oob(&[vec![0.0, 0.0]], &[0], &[Some(0)]);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.evaluated, 0);
    }

    #[test]
    fn grown_forest_predictions_are_normalized() {
        let mut rng = tree_rng(9, 9);
        let inputs: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<usize> = inputs
            .iter()
            .map(|v| (v[0] > 0.5) as usize + (v[1] > 0.7) as usize)
            .collect();
        let subjects: Vec<usize> = (0..120).map(|i| i % 6).collect();
        let (trees, boots, report) = grow_forest(10, 3, TreeCaps::default(), &Source, 4, |rng| {
            let b = build_balanced_bootstrap(&subjects, &y, 3, 2.0 / 3.0, rng);
            Bootstrap {
                inputs: b
                    .samples
                    .iter()
                    .map(|&i| inputs[i as usize].clone())
                    .collect(),
                labels: b.samples.iter().map(|&i| y[i as usize]).collect(),
                subjects: b.subjects,
                missing_labels: b.missing_labels,
            }
        });
        assert_eq!(report.trees, 10);
        let names = (0..6).map(|i| format!("s{i}")).collect();
        let f = Forest::new(labels(3), names, trees, boots);
        for x in &inputs {
            let p = f.predict(x);
            let manual: Vec<f64> = (0..3)
                .map(|l| f.trees().iter().map(|t| t.predict(x)[l]).sum::<f64>() / 10.0)
                .collect();
            assert_eq!(p, manual);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
