//! Small statistical helpers shared by the simulation and experiment code.

use serde::{Deserialize, Serialize};

/// Default number of batches for batch-means confidence estimates.
pub const DEFAULT_BATCHES: usize = 20;

/// Point estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(mean: f64, std_error: f64) -> Self {
        Self { mean, std_error }
    }

    /// Returns true if `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Sample mean and standard error of i.i.d. observations.
pub fn iid_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate::new(mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate::new(mean, (var / n as f64).sqrt())
}

/// Batch-means estimate of the mean of a serially correlated sequence.
///
/// The sequence is cut into `batches` contiguous batches of equal length
/// (trailing remainder dropped); the batch averages are treated as i.i.d.
pub fn batch_means(values: &[f64], batches: usize) -> Estimate {
    let batches = batches.max(2);
    let len = values.len() / batches;
    if len == 0 {
        return iid_estimate(values);
    }
    let avgs: Vec<f64> = values
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let overall = values.iter().sum::<f64>() / values.len() as f64;
    let se = iid_estimate(&avgs).std_error;
    Estimate::new(overall, se)
}

/// Poisson probability mass `P[N = j]` for mean `m`, evaluated in log space.
pub fn poisson_pmf(m: f64, j: usize) -> f64 {
    if m == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=j).map(|i| (i as f64).ln()).sum();
    (-m + j as f64 * m.ln() - ln_fact).exp()
}

/// Kolmogorov-Smirnov statistic of `sample` against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_pmf_sums_to_one() {
        let total: f64 = (0..200).map(|j| poisson_pmf(7.5, j)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((poisson_pmf(2.0, 0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn batch_means_of_constant_has_zero_error() {
        let v = vec![3.0; 1000];
        let e = batch_means(&v, 20);
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn ks_of_uniform_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }
}
