//! Balanced-bootstrap random forests over arbitrary split features.
//!
//! Trees are grown greedily: each node draws a fresh set of candidate splits
//! from a [`CandidateSource`], keeps the one with the lowest size-weighted
//! Gini impurity, and recurses until the node is label-homogeneous (or a
//! depth/size cap is hit). Bootstraps are drawn at the subject level and
//! balanced by downsampling, and every tree remembers its subjects so the
//! forest can be scored out of bag.

mod bootstrap;
pub mod codec;
mod ensemble;
mod impurity;
mod split;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bootstrap::{balance, build_balanced_bootstrap, draw_subjects, BalancedBootstrap};
pub use codec::{FeatureCodec, Reader, FOREST_MAGIC, FOREST_VERSION};
pub use ensemble::{grow_forest, Bootstrap, Forest, GrowthReport, OobReport};
pub use impurity::{gini, weighted_gini};
pub use split::{best_split, SplitChoice};
pub use tree::{grow_tree, Node, Tree, TreeCaps};

/// Random generator used for everything a single tree does.
pub type TreeRng = ChaCha8Rng;

/// A scalar feature evaluated on inputs of type `I`.
pub trait SplitFeature<I: ?Sized> {
    fn evaluate(&self, input: &I) -> f64;
}

/// One feature draw with its candidate thresholds. Candidates are numbered
/// group-major: group `g`, threshold `j` has flat index
/// `sum(len of groups before g) + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup<F> {
    pub feature: F,
    pub thresholds: Vec<f64>,
}

/// Generates the candidate splits examined at one node.
pub trait CandidateSource<F> {
    fn generate(&self, rng: &mut TreeRng) -> Vec<CandidateGroup<F>>;
}

/// Mixes a base seed with a stream id (tree index, cell id...) into an
/// independent seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = base
        ^ stream
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn tree_rng(base: u64, stream: u64) -> TreeRng {
    TreeRng::seed_from_u64(derive_seed(base, stream))
}

/// Index of the largest probability; ties go to the lowest label.
pub fn argmax(probabilities: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[best] {
            best = i;
        }
    }
    best
}
