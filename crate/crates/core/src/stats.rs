//! Small descriptive statistics shared by the scheduler and the evaluators.

/// Nearest-rank percentile (`pct` in 0..=100) of an unsorted sample.
///
/// Rank is `ceil(pct/100 * n)`, clamped to `1..=n`.
pub fn nearest_rank_percentile(values: &[f64], pct: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Mean and standard error of the mean. The standard error uses the
/// unbiased sample variance and is 0 for fewer than two points.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_one_to_ten() {
        let h: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&h, 20.0), Some(2.0));
        assert_eq!(nearest_rank_percentile(&h, 80.0), Some(8.0));
        assert_eq!(nearest_rank_percentile(&h, 0.0), Some(1.0));
        assert_eq!(nearest_rank_percentile(&h, 100.0), Some(10.0));
        assert_eq!(nearest_rank_percentile(&[], 50.0), None);
    }

    #[test]
    fn stderr_basic() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (1.6666666666666667f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[5.0]), (5.0, 0.0));
    }
}
