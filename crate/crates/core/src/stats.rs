//! Sample statistics used by the empirical estimators and Monte-Carlo checks.

/// Raw sample moment `mean(x^r)`.
pub fn raw_moment(x: &[f64], r: i32) -> f64 {
    x.iter().map(|v| v.powi(r)).sum::<f64>() / x.len() as f64
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divides by n).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

/// Sample lag-`l` autocorrelation
/// `Σ (x_i - x̄)(x_{i+l} - x̄) / Σ (x_i - x̄)²`. `None` for constant input
/// or `l >= n`.
pub fn autocorrelation(x: &[f64], lag: usize) -> Option<f64> {
    let n = x.len();
    if lag >= n {
        return None;
    }
    let m = mean(x);
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if !(den > 0.0) {
        return None;
    }
    let num: f64 = x.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    Some(num / den)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard error of the mean of a possibly autocorrelated sequence by
/// non-overlapping batch means (`batches` equal blocks).
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(x.len());
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|i| mean(&x[i * size..(i + 1) * size])).collect();
    let var = means.iter().map(|m| (m - mean(&means)).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Batch-means standard error of an arbitrary statistic computed on blocks,
/// using the spread of the block estimates.
pub fn block_se<F: Fn(&[f64]) -> f64>(x: &[f64], batches: usize, stat: F) -> f64 {
    let size = x.len() / batches;
    let est: Vec<f64> = (0..batches).map(|i| stat(&x[i * size..(i + 1) * size])).collect();
    let m = mean(&est);
    let var = est.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_statistics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert_eq!(raw_moment(&x, 2), 7.5);
        assert_eq!(variance(&x), 1.25);
        assert_eq!(median(&x), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        // lag-1: deviations (-1.5, -0.5, 0.5, 1.5): (0.75 - 0.25 + 0.75) / 5
        assert!((autocorrelation(&x, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!(autocorrelation(&[2.0, 2.0, 2.0], 1).is_none());
    }

    #[test]
    fn batch_means_on_iid_sequence() {
        // Alternating ±1: every block of even length has mean 0.
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(batch_means_se(&x, 10), 0.0);
    }
}
