//! The six heterogeneous feature templates and their random candidate
//! generator.
//!
//! Templates 1-3 are evaluated on the current frame only. Templates 4-6 are
//! the temporal derivatives of 1-3 over a (previous, current) frame pair with
//! identical parameters.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{self, HogParams, ORIENTATION_BINS};
use crate::forest::{CandidateGroup, CandidateSource, SplitFeature, TreeRng};
use crate::frame::LandmarkFrame;
use crate::geometry;
use crate::params::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Template {
    Distance,
    Angle,
    Appearance,
    DistanceDelta,
    AngleDelta,
    AppearanceDelta,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Distance,
        Template::Angle,
        Template::Appearance,
        Template::DistanceDelta,
        Template::AngleDelta,
        Template::AppearanceDelta,
    ];

    /// 1-based template number.
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_id(id: u8) -> Option<Template> {
        Template::ALL.get((id as usize).checked_sub(1)?).copied()
    }

    pub fn is_dynamic(self) -> bool {
        self.id() > 3
    }

    pub fn is_appearance(self) -> bool {
        matches!(self, Template::Appearance | Template::AppearanceDelta)
    }
}

/// A parameterized feature; paired with a threshold it becomes a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Feature {
    Distance {
        a: u16,
        b: u16,
    },
    Angle {
        a: u16,
        b: u16,
        c: u16,
        use_cos: bool,
    },
    Appearance(HogParams),
    DistanceDelta {
        a: u16,
        b: u16,
    },
    AngleDelta {
        a: u16,
        b: u16,
        c: u16,
        use_cos: bool,
    },
    AppearanceDelta(HogParams),
}

impl Feature {
    pub fn template(&self) -> Template {
        match self {
            Feature::Distance { .. } => Template::Distance,
            Feature::Angle { .. } => Template::Angle,
            Feature::Appearance(_) => Template::Appearance,
            Feature::DistanceDelta { .. } => Template::DistanceDelta,
            Feature::AngleDelta { .. } => Template::AngleDelta,
            Feature::AppearanceDelta(_) => Template::AppearanceDelta,
        }
    }

    /// Evaluates the feature. Derivative templates evaluate to 0 when the
    /// input has no previous frame.
    #[inline]
    pub fn evaluate(&self, input: &FeatureInput<'_>) -> f64 {
        let cur = input.cur;
        match *self {
            Feature::Distance { a, b } => geometry::phi1(cur, a as usize, b as usize),
            Feature::Angle { a, b, c, use_cos } => {
                geometry::phi2(cur, a as usize, b as usize, c as usize, use_cos)
            }
            Feature::Appearance(ref p) => channels::phi3(cur, p),
            Feature::DistanceDelta { a, b } => match input.prev {
                Some(prev) => geometry::phi4(prev, cur, a as usize, b as usize),
                None => 0.0,
            },
            Feature::AngleDelta { a, b, c, use_cos } => match input.prev {
                Some(prev) => {
                    geometry::phi5(prev, cur, a as usize, b as usize, c as usize, use_cos)
                }
                None => 0.0,
            },
            Feature::AppearanceDelta(ref p) => match input.prev {
                Some(prev) => channels::phi6(prev, cur, p),
                None => 0.0,
            },
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = self.template().id();
        match self {
            Feature::Distance { a, b } | Feature::DistanceDelta { a, b } => {
                write!(f, "phi{id}(a={a}, b={b})")
            }
            Feature::Angle { a, b, c, use_cos } | Feature::AngleDelta { a, b, c, use_cos } => {
                let kind = if *use_cos { "cos" } else { "sin" };
                write!(f, "phi{id}(a={a}, b={b}, c={c}, {kind})")
            }
            Feature::Appearance(p) | Feature::AppearanceDelta(p) => write!(
                f,
                "phi{id}(tri={:?}, ch={}, s={:.4}, bary=[{:.4}, {:.4}, {:.4}])",
                p.triangle, p.channel, p.size, p.barycentric[0], p.barycentric[1], p.barycentric[2]
            ),
        }
    }
}

/// A static sample (current frame only) or a frame pair.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInput<'a> {
    pub prev: Option<&'a LandmarkFrame>,
    pub cur: &'a LandmarkFrame,
}

impl<'a> FeatureInput<'a> {
    pub fn single(cur: &'a LandmarkFrame) -> Self {
        FeatureInput { prev: None, cur }
    }

    pub fn pair(prev: &'a LandmarkFrame, cur: &'a LandmarkFrame) -> Self {
        FeatureInput {
            prev: Some(prev),
            cur,
        }
    }
}

impl<'a> SplitFeature<FeatureInput<'a>> for Feature {
    #[inline]
    fn evaluate(&self, input: &FeatureInput<'a>) -> f64 {
        Feature::evaluate(self, input)
    }
}

/// One split candidate: a feature with a threshold. Samples with
/// `value < threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub feature: Feature,
    pub threshold: f64,
}

/// Per-template `[min, max]` value ranges used to draw thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRanges(pub [(f64, f64); 6]);

impl Default for ThresholdRanges {
    fn default() -> Self {
        ThresholdRanges([
            (0.0, 2.0),
            (-1.0, 1.0),
            (0.0, 1.0),
            (-0.5, 0.5),
            (-0.5, 0.5),
            (-0.5, 0.5),
        ])
    }
}

/// Number of random evaluations used to estimate each template range.
pub const RANGE_SAMPLES: usize = 1000;

impl ThresholdRanges {
    pub fn get(&self, template: Template) -> (f64, f64) {
        self.0[template as usize]
    }

    /// Min/max of each template over `RANGE_SAMPLES` random (sample,
    /// parameter) draws. Templates that cannot be evaluated on `inputs`
    /// (appearance without channels, derivatives without pairs) keep the
    /// default range.
    pub fn estimate(
        inputs: &[FeatureInput<'_>],
        landmark_count: usize,
        rng: &mut TreeRng,
    ) -> ThresholdRanges {
        let mut ranges = ThresholdRanges::default();
        if inputs.is_empty() {
            return ranges;
        }
        let has_pairs = inputs.iter().any(|i| i.prev.is_some());
        let has_channels = inputs.iter().all(|i| i.cur.channels.is_some());
        for template in Template::ALL {
            if (template.is_dynamic() && !has_pairs) || (template.is_appearance() && !has_channels)
            {
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for _ in 0..RANGE_SAMPLES {
                let input = &inputs[rng.gen_range(0..inputs.len())];
                let v = random_feature(template, landmark_count, rng).evaluate(input);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo.is_finite() && hi.is_finite() {
                ranges.0[template as usize] = (lo, hi);
            }
        }
        ranges
    }
}

/// Draws feature parameters uniformly for one template.
pub fn random_feature(template: Template, landmark_count: usize, rng: &mut TreeRng) -> Feature {
    let n = landmark_count;
    let pick = |rng: &mut TreeRng, k: usize| -> Vec<u16> {
        index::sample(rng, n, k)
            .into_iter()
            .map(|i| i as u16)
            .collect()
    };
    match template {
        Template::Distance | Template::DistanceDelta => {
            let v = pick(rng, 2);
            let (a, b) = (v[0], v[1]);
            if template == Template::Distance {
                Feature::Distance { a, b }
            } else {
                Feature::DistanceDelta { a, b }
            }
        }
        Template::Angle | Template::AngleDelta => {
            let v = pick(rng, 3);
            let use_cos = rng.gen::<bool>();
            let (a, b, c) = (v[0], v[1], v[2]);
            if template == Template::Angle {
                Feature::Angle { a, b, c, use_cos }
            } else {
                Feature::AngleDelta { a, b, c, use_cos }
            }
        }
        Template::Appearance | Template::AppearanceDelta => {
            let v = pick(rng, 3);
            let channel = rng.gen_range(1..=ORIENTATION_BINS as u8);
            let size = rng.gen_range(0.1..=1.0);
            // Uniform on the simplex from two sorted uniforms.
            let (mut u, mut w) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u > w {
                std::mem::swap(&mut u, &mut w);
            }
            let params = HogParams {
                triangle: [v[0], v[1], v[2]],
                channel,
                size,
                barycentric: [u, w - u, 1.0 - w],
            };
            if template == Template::Appearance {
                Feature::Appearance(params)
            } else {
                Feature::AppearanceDelta(params)
            }
        }
    }
}

/// Per-node candidate generator: for each template `i`, `k(i)` parameter
/// draws, each with `thresholds_per_feature` uniform thresholds.
#[derive(Debug, Clone)]
pub struct FeatureSampler {
    pub counts: [usize; 6],
    pub thresholds_per_feature: usize,
    pub ranges: ThresholdRanges,
    pub landmark_count: usize,
}

impl FeatureSampler {
    pub fn new(hp: &HyperParams, ranges: ThresholdRanges, landmark_count: usize) -> Self {
        FeatureSampler {
            counts: hp.counts,
            thresholds_per_feature: hp.thresholds_per_feature,
            ranges,
            landmark_count,
        }
    }

    /// Flat candidate list, template-major.
    pub fn sample_candidates(&self, rng: &mut TreeRng) -> Vec<FeatureDescriptor> {
        self.generate(rng)
            .into_iter()
            .flat_map(|g| {
                let feature = g.feature;
                g.thresholds
                    .into_iter()
                    .map(move |threshold| FeatureDescriptor { feature, threshold })
            })
            .collect()
    }
}

impl CandidateSource<Feature> for FeatureSampler {
    fn generate(&self, rng: &mut TreeRng) -> Vec<CandidateGroup<Feature>> {
        let total: usize = self.counts.iter().sum();
        let mut groups = Vec::with_capacity(total);
        for template in Template::ALL {
            let (lo, hi) = self.ranges.get(template);
            for _ in 0..self.counts[template as usize] {
                let feature = random_feature(template, self.landmark_count, rng);
                let thresholds = (0..self.thresholds_per_feature)
                    .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                    .collect();
                groups.push(CandidateGroup {
                    feature,
                    thresholds,
                });
            }
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn template_ids() {
        for t in Template::ALL {
            assert_eq!(Template::from_id(t.id()), Some(t));
        }
        assert_eq!(Template::from_id(0), None);
        assert_eq!(Template::from_id(7), None);
    }

    #[test]
    fn candidate_counts() {
        let mut hp = HyperParams::static_profile();
        hp.counts = [1, 0, 0, 0, 0, 0];
        let sampler = FeatureSampler::new(&hp, ThresholdRanges::default(), 49);
        let mut rng = TreeRng::seed_from_u64(1);
        let c = sampler.sample_candidates(&mut rng);
        assert_eq!(c.len(), 25);
        assert!(c.iter().all(|d| d.feature.template() == Template::Distance));

        let sampler = FeatureSampler::new(
            &HyperParams::static_profile(),
            ThresholdRanges::default(),
            49,
        );
        assert_eq!(sampler.sample_candidates(&mut rng).len(), 6000);
        let sampler =
            FeatureSampler::new(&HyperParams::pcrf_profile(), ThresholdRanges::default(), 49);
        assert_eq!(sampler.sample_candidates(&mut rng).len(), 6000);
    }

    #[test]
    fn candidates_are_deterministic() {
        let sampler =
            FeatureSampler::new(&HyperParams::pcrf_profile(), ThresholdRanges::default(), 49);
        let a = sampler.sample_candidates(&mut TreeRng::seed_from_u64(9));
        let b = sampler.sample_candidates(&mut TreeRng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_draws_are_valid() {
        let mut rng = TreeRng::seed_from_u64(2);
        for _ in 0..2000 {
            for t in Template::ALL {
                match random_feature(t, 49, &mut rng) {
                    Feature::Distance { a, b } | Feature::DistanceDelta { a, b } => {
                        assert!(a != b && a < 49 && b < 49)
                    }
                    Feature::Angle { a, b, c, .. } | Feature::AngleDelta { a, b, c, .. } => {
                        assert!(a != b && b != c && a != c)
                    }
                    Feature::Appearance(p) | Feature::AppearanceDelta(p) => {
                        let [x, y, z] = p.triangle;
                        assert!(x != y && y != z && x != z);
                        assert!((1..=8).contains(&p.channel));
                        assert!((0.1..=1.0).contains(&p.size));
                        assert!(p.barycentric.iter().all(|&w| w >= 0.0));
                        assert!((p.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
