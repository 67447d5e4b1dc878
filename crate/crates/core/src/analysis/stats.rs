//! Order statistics and the Kruskal-Wallis H test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    /// Whether ties were present and the correction divisor applied.
    pub tie_corrected: bool,
    /// All values identical: H = 0 and p = 1 by definition.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KwError {
    #[error("need at least two samples, got {0}")]
    TooFewGroups(usize),
    #[error("sample {0} is empty")]
    EmptyGroup(usize),
    #[error("sample {group} holds a non-finite value")]
    NonFinite { group: usize },
}

/// Ranks 1..=n with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Kruskal-Wallis H over `k >= 2` non-empty samples:
/// `H = 12 / (N (N + 1)) * Σ n_i (R̄_i - (N + 1) / 2)²`, divided by
/// `1 - Σ (t³ - t) / (N³ - N)` over tie groups of size `t`. The p-value is
/// the chi-square upper tail with `k - 1` degrees of freedom.
pub fn kruskal_wallis(samples: &[Vec<f64>]) -> Result<KwResult, KwError> {
    if samples.len() < 2 {
        return Err(KwError::TooFewGroups(samples.len()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.is_empty() {
            return Err(KwError::EmptyGroup(i));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(KwError::NonFinite { group: i });
        }
    }
    let df = samples.len() - 1;
    let pooled: Vec<f64> = samples.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        let t = run.len() as f64;
        tie_sum += t * t * t - t;
    }
    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KwResult {
            h: 0.0,
            df,
            p_value: 1.0,
            tie_corrected: true,
            degenerate: true,
        });
    }

    let centre = (n + 1.0) / 2.0;
    let mut offset = 0;
    let mut spread = 0.0;
    for s in samples {
        let k = s.len();
        let mean_rank = ranks[offset..offset + k].iter().sum::<f64>() / k as f64;
        spread += k as f64 * (mean_rank - centre).powi(2);
        offset += k;
    }
    let h = 12.0 * spread / (n * (n + 1.0) * correction);
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(KwResult {
        h,
        df,
        p_value: chi.sf(h).clamp(0.0, 1.0),
        tie_corrected: tie_sum > 0.0,
        degenerate: false,
    })
}

/// Linear-interpolation percentile (`q` in [0, 1]) of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Mean, median and 80th percentile of counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub total: u64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub p80: Option<f64>,
}

pub fn summarize(counts: impl IntoIterator<Item = u64>) -> Summary {
    let mut values: Vec<u64> = counts.into_iter().collect();
    values.sort_unstable();
    let total: u64 = values.iter().sum();
    let sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    Summary {
        n: values.len(),
        total,
        mean: (!values.is_empty()).then(|| total as f64 / values.len() as f64),
        median: percentile_sorted(&sorted, 0.5),
        p80: percentile_sorted(&sorted, 0.8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kw_by_hand() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
        assert_eq!(r.h, 7.2);
        assert_eq!(r.df, 2);
        assert!(!r.tie_corrected);
        // chi-square(2) upper tail is exp(-H/2)
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kw_identical_samples() {
        let r = kruskal_wallis(&[vec![2.0, 2.0], vec![2.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!((r.h, r.p_value, r.degenerate), (0.0, 1.0, true));
    }

    #[test]
    fn kw_transform_invariance() {
        let a = kruskal_wallis(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = kruskal_wallis(&[vec![10.0, 20.0], vec![30.0, 40.0]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kw_ties_by_hand() {
        // pooled 1,2,2,3 -> ranks 1, 2.5, 2.5, 4; groups {1,2} {2,3}
        // means 1.75, 3.25; centre 2.5; spread 2*(0.5625)*2 = 2.25
        // H0 = 12/20 * 2.25 = 1.35; C = 1 - 6/60 = 0.9; H = 1.5
        let r = kruskal_wallis(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert!((r.h - 1.5).abs() < 1e-12);
        assert!(r.tie_corrected);
    }

    #[test]
    fn kw_errors() {
        assert_eq!(kruskal_wallis(&[vec![1.0]]), Err(KwError::TooFewGroups(1)));
        assert_eq!(kruskal_wallis(&[vec![1.0], vec![]]), Err(KwError::EmptyGroup(1)));
        assert_eq!(
            kruskal_wallis(&[vec![1.0], vec![f64::NAN]]),
            Err(KwError::NonFinite { group: 1 })
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn summaries() {
        let s = summarize([10, 5, 5]);
        assert_eq!(s.n, 3);
        assert!((s.mean.unwrap() - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.median, Some(5.0));
        // sorted 5,5,10: position 1.6 -> 5 + 0.6 * 5
        assert_eq!(s.p80, Some(8.0));
        let one = summarize([7]);
        assert_eq!((one.mean, one.median, one.p80), (Some(7.0), Some(7.0), Some(7.0)));
        assert_eq!(summarize([]).median, None);
    }
}
