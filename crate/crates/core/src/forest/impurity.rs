use crate::error::{Error, Result};

/// Gini impurity `1 - sum(p_l^2)` of a label histogram.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyNode);
    }
    Ok(gini_unchecked(counts, total))
}

#[inline]
pub(crate) fn gini_unchecked(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    1.0 - sum_sq / (n * n)
}

/// Children-size-weighted Gini of a binary split. Both sides must be
/// nonempty.
#[inline]
pub fn weighted_gini(left: &[usize], right: &[usize]) -> f64 {
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = (nl + nr) as f64;
    (nl as f64 * gini_unchecked(left, nl) + nr as f64 * gini_unchecked(right, nr)) / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(gini(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[5, 5]).unwrap(), 0.5);
        assert_eq!(gini(&[1, 1, 1, 1]).unwrap(), 0.75);
        assert!(matches!(gini(&[0, 0]), Err(Error::EmptyNode)));
    }

    #[test]
    fn pure_split_has_zero_weighted_impurity() {
        assert_eq!(weighted_gini(&[4, 0], &[0, 6]), 0.0);
        assert_eq!(weighted_gini(&[2, 2], &[3, 3]), 0.5);
    }
}
