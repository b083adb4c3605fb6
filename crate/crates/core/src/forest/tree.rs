use super::split::best_split;
use super::{CandidateSource, SplitFeature, TreeRng};

#[derive(Debug, Clone, PartialEq)]
pub enum Node<F> {
    Split {
        feature: F,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Offset of the leaf distribution in [`Tree::leaf_values`].
    Leaf { offset: u32 },
}

/// A decision tree stored as a preorder node array: the left child of a
/// split directly follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<F> {
    nodes: Vec<Node<F>>,
    leaf_values: Vec<f64>,
    n_labels: usize,
}

/// Growth caps on top of the purity stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeCaps {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeCaps {
    fn default() -> Self {
        TreeCaps {
            max_depth: 30,
            min_samples_leaf: 1,
        }
    }
}

impl<F> Tree<F> {
    pub(crate) fn from_parts(nodes: Vec<Node<F>>, leaf_values: Vec<f64>, n_labels: usize) -> Self {
        Tree {
            nodes,
            leaf_values,
            n_labels,
        }
    }

    pub fn nodes(&self) -> &[Node<F>] {
        &self.nodes
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn leaf_distribution(&self, offset: u32) -> &[f64] {
        let o = offset as usize;
        &self.leaf_values[o..o + self.n_labels]
    }

    pub fn depth(&self) -> usize {
        fn walk<F>(t: &Tree<F>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(t, *left as usize).max(walk(t, *right as usize))
                }
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Label distribution of the leaf reached by `input`.
    #[inline]
    pub fn predict<I: ?Sized>(&self, input: &I) -> &[f64]
    where
        F: SplitFeature<I>,
    {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if feature.evaluate(input) < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { offset } => return self.leaf_distribution(*offset),
            }
        }
    }
}

struct Grower<'a, I, F, S> {
    inputs: &'a [I],
    labels: &'a [usize],
    n_labels: usize,
    source: &'a S,
    caps: TreeCaps,
    nodes: Vec<Node<F>>,
    leaf_values: Vec<f64>,
}

impl<'a, I, F, S> Grower<'a, I, F, S>
where
    F: SplitFeature<I> + Clone,
    S: CandidateSource<F>,
{
    fn leaf(&mut self, counts: &[usize]) -> u32 {
        let total: usize = counts.iter().sum();
        let offset = self.leaf_values.len() as u32;
        self.leaf_values
            .extend(counts.iter().map(|&c| c as f64 / total as f64));
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { offset });
        id
    }

    fn grow(&mut self, samples: Vec<u32>, depth: usize, rng: &mut TreeRng) -> u32 {
        let mut counts = vec![0usize; self.n_labels];
        for &s in &samples {
            counts[self.labels[s as usize]] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present <= 1 || depth >= self.caps.max_depth {
            return self.leaf(&counts);
        }
        let groups = self.source.generate(rng);
        let choice = best_split(
            self.inputs,
            self.labels,
            &samples,
            self.n_labels,
            &groups,
            self.caps.min_samples_leaf,
        );
        let Some(choice) = choice else {
            return self.leaf(&counts);
        };
        let feature = groups[choice.group].feature.clone();
        drop(groups);
        let (left, right): (Vec<u32>, Vec<u32>) = samples
            .into_iter()
            .partition(|&s| feature.evaluate(&self.inputs[s as usize]) < choice.threshold);

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { offset: 0 });
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold: choice.threshold,
            left: l,
            right: r,
        };
        id as u32
    }
}

/// Grows one tree on `samples` (indices into `inputs`/`labels`).
///
/// Homogeneous nodes become one-hot leaves. Nodes at `max_depth`, or where
/// no candidate yields two children of at least `min_samples_leaf` samples,
/// become leaves holding the empirical label distribution. An empty sample
/// list yields a uniform leaf.
pub fn grow_tree<I, F, S>(
    inputs: &[I],
    labels: &[usize],
    samples: Vec<u32>,
    n_labels: usize,
    source: &S,
    caps: TreeCaps,
    rng: &mut TreeRng,
) -> Tree<F>
where
    F: SplitFeature<I> + Clone,
    S: CandidateSource<F>,
{
    let mut grower = Grower {
        inputs,
        labels,
        n_labels,
        source,
        caps,
        nodes: Vec::new(),
        leaf_values: Vec::new(),
    };
    if samples.is_empty() {
        grower.leaf(&vec![1; n_labels]);
    } else {
        grower.grow(samples, 0, rng);
    }
    Tree {
        nodes: grower.nodes,
        leaf_values: grower.leaf_values,
        n_labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::CandidateGroup;
    use rand::{Rng, SeedableRng};

    #[derive(Debug, Clone, PartialEq)]
    struct Column(usize);

    impl SplitFeature<[f64; 2]> for Column {
        fn evaluate(&self, input: &[f64; 2]) -> f64 {
            input[self.0]
        }
    }

    struct RandomColumns;

    impl CandidateSource<Column> for RandomColumns {
        fn generate(&self, rng: &mut TreeRng) -> Vec<CandidateGroup<Column>> {
            (0..4)
                .map(|_| CandidateGroup {
                    feature: Column(rng.gen_range(0..2)),
                    thresholds: (0..5).map(|_| rng.gen_range(1..20) as f64 / 20.0).collect(),
                })
                .collect()
        }
    }

    fn xor_set() -> (Vec<[f64; 2]>, Vec<usize>) {
        let mut rng = TreeRng::seed_from_u64(11);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            // cell centers of a 20x20 grid, always separable by k/20 thresholds
            let p = [
                (rng.gen_range(0..20) as f64 + 0.5) / 20.0,
                (rng.gen_range(0..20) as f64 + 0.5) / 20.0,
            ];
            labels.push(((p[0] > 0.5) ^ (p[1] > 0.5)) as usize);
            inputs.push(p);
        }
        (inputs, labels)
    }

    #[test]
    fn homogeneous_bootstrap_is_single_one_hot_leaf() {
        let inputs = vec![[0.1, 0.2]; 5];
        let labels = vec![2; 5];
        let mut rng = TreeRng::seed_from_u64(0);
        let t = grow_tree(
            &inputs,
            &labels,
            (0..5).collect(),
            3,
            &RandomColumns,
            TreeCaps::default(),
            &mut rng,
        );
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[0.5, 0.5]), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn xor_is_memorized() {
        let (inputs, labels) = xor_set();
        let mut rng = TreeRng::seed_from_u64(1);
        let t = grow_tree(
            &inputs,
            &labels,
            (0..200).collect(),
            2,
            &RandomColumns,
            TreeCaps::default(),
            &mut rng,
        );
        for (x, &l) in inputs.iter().zip(&labels) {
            assert_eq!(t.predict(x)[l], 1.0);
        }
    }

    #[test]
    fn depth_cap_stores_empirical_distribution() {
        let (inputs, labels) = xor_set();
        let mut rng = TreeRng::seed_from_u64(1);
        let caps = TreeCaps {
            max_depth: 0,
            min_samples_leaf: 1,
        };
        let t = grow_tree(
            &inputs,
            &labels,
            (0..200).collect(),
            2,
            &RandomColumns,
            caps,
            &mut rng,
        );
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64;
        let d = t.predict(&[0.0, 0.0]);
        assert_eq!(d[1], ones / 200.0);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_ignores_sample_order() {
        let (inputs, labels) = xor_set();
        let forward: Vec<u32> = (0..200).collect();
        let backward: Vec<u32> = (0..200).rev().collect();
        let a = grow_tree(
            &inputs,
            &labels,
            forward,
            2,
            &RandomColumns,
            TreeCaps::default(),
            &mut TreeRng::seed_from_u64(5),
        );
        let b = grow_tree(
            &inputs,
            &labels,
            backward,
            2,
            &RandomColumns,
            TreeCaps::default(),
            &mut TreeRng::seed_from_u64(5),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn preorder_layout() {
        let (inputs, labels) = xor_set();
        let t = grow_tree(
            &inputs,
            &labels,
            (0..200).collect(),
            2,
            &RandomColumns,
            TreeCaps::default(),
            &mut TreeRng::seed_from_u64(3),
        );
        for (i, n) in t.nodes().iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                assert_eq!(*left as usize, i + 1);
                assert!(*right as usize > i + 1);
            }
        }
        assert!(t.depth() >= 2);
        assert!(t.leaf_count() >= 4);
    }
}
