use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forest growing hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Candidate parameter draws per node for templates 1..=6.
    pub counts: [usize; 6],
    pub thresholds_per_feature: usize,
    /// Fraction of subjects drawn for each tree's bootstrap.
    pub data_ratio: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum number of samples in either child of a split.
    pub min_samples_leaf: usize,
}

impl HyperParams {
    /// Static random forest settings (templates 1-3 only).
    pub fn static_profile() -> Self {
        HyperParams {
            counts: [40, 40, 160, 0, 0, 0],
            thresholds_per_feature: 25,
            data_ratio: 2.0 / 3.0,
            n_trees: 500,
            max_depth: 30,
            min_samples_leaf: 1,
        }
    }

    /// Pairwise forest settings (all six templates).
    pub fn pcrf_profile() -> Self {
        HyperParams {
            counts: [20, 20, 80, 20, 20, 80],
            ..HyperParams::static_profile()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "static" | "rf" => Some(Self::static_profile()),
            "pcrf" | "pairwise" => Some(Self::pcrf_profile()),
            _ => None,
        }
    }

    pub fn total_candidates(&self) -> usize {
        self.counts.iter().sum::<usize>() * self.thresholds_per_feature
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    /// Moves the appearance budgets (templates 3 and 6) onto the geometric
    /// templates of the same kind, keeping the total candidate count. Used
    /// when frames carry no image channels.
    pub fn geometric_only(mut self) -> Self {
        for (app, dist, angle) in [(2, 0, 1), (5, 3, 4)] {
            let k = self.counts[app];
            self.counts[dist] += k / 2;
            self.counts[angle] += k - k / 2;
            self.counts[app] = 0;
        }
        self
    }

    /// Scales every template count by `factor`, keeping nonzero templates
    /// at one draw or more.
    pub fn scaled_candidates(mut self, factor: f64) -> Self {
        for k in self.counts.iter_mut() {
            if *k > 0 {
                *k = ((*k as f64 * factor).round() as usize).max(1);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::ZeroTrees);
        }
        if !(self.data_ratio > 0.0 && self.data_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "data_ratio must lie in (0, 1], got {}",
                self.data_ratio
            )));
        }
        if self.total_candidates() == 0 {
            return Err(Error::Config("no split candidates per node".into()));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::static_profile()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_match_published_settings() {
        let s = HyperParams::static_profile();
        assert_eq!(s.counts, [40, 40, 160, 0, 0, 0]);
        assert_eq!(s.total_candidates(), 6000);
        assert_eq!(s.n_trees, 500);
        assert!((s.data_ratio - 2.0 / 3.0).abs() < 1e-15);
        let p = HyperParams::pcrf_profile();
        assert_eq!(p.counts, [20, 20, 80, 20, 20, 80]);
        assert_eq!(p.total_candidates(), 6000);
        assert_eq!(p.thresholds_per_feature, 25);
    }

    #[test]
    fn geometric_only_keeps_totals() {
        let p = HyperParams::pcrf_profile().geometric_only();
        assert_eq!(p.counts, [60, 60, 0, 60, 60, 0]);
        assert_eq!(p.total_candidates(), 6000);
        let s = HyperParams::static_profile().geometric_only();
        assert_eq!(s.counts, [120, 120, 0, 0, 0, 0]);
    }

    #[test]
    fn validation() {
        assert!(HyperParams::static_profile().validate().is_ok());
        assert!(HyperParams::static_profile()
            .with_trees(0)
            .validate()
            .is_err());
        let mut p = HyperParams::static_profile();
        p.data_ratio = 0.0;
        assert!(p.validate().is_err());
    }
}
