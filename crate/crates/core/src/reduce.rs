//! Deterministic reductions.
//!
//! Every scalar aggregate in the crate goes through [`pairwise_sum`], which
//! splits the input at fixed midpoints. The result depends only on the
//! order of the input slice, never on how many threads produced it.

const LEAF: usize = 32;

/// Fixed-order pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean of `values`, or `None` when empty.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn empty_mean_is_none() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[2.0, 4.0]), Some(3.0));
    }
}
