//! Output analysis for stationary simulation series.
//!
//! Point estimates use the full sample; standard errors come from
//! non-overlapping batch means, the standard variance estimator for
//! autocorrelated steady-state output.

/// Default number of non-overlapping batches.
pub const DEFAULT_BATCHES: usize = 64;

/// Single-pass accumulator over a series of known length.
///
/// The mean uses every observation; the standard error uses the first
/// `batches * batch_len` observations split into equal batches. Any
/// remainder still contributes to the mean.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    n_total: usize,
    batch_len: usize,
    batches: usize,
    count: usize,
    sum: f64,
    batch_sums: Vec<f64>,
}

impl BatchAccumulator {
    pub fn new(n_total: usize) -> Self {
        Self::with_batches(n_total, DEFAULT_BATCHES)
    }

    pub fn with_batches(n_total: usize, batches: usize) -> Self {
        let batches = batches.min(n_total).max(1);
        let batch_len = (n_total / batches).max(1);
        BatchAccumulator {
            n_total,
            batch_len,
            batches,
            count: 0,
            sum: 0.0,
            batch_sums: vec![0.0; batches],
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let b = self.count / self.batch_len;
        if b < self.batches {
            self.batch_sums[b] += x;
        }
        self.sum += x;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sum / self.count as f64
    }

    /// Batch means of the accumulated series.
    pub fn batch_means(&self) -> Vec<f64> {
        let full = (self.count / self.batch_len).min(self.batches);
        self.batch_sums[..full]
            .iter()
            .map(|s| s / self.batch_len as f64)
            .collect()
    }

    /// Batch-means standard error of the mean; 0 when fewer than two batches.
    pub fn std_error(&self) -> f64 {
        std_error_of_means(&self.batch_means())
    }

    /// True when the accumulator saw exactly the declared number of points.
    pub fn is_complete(&self) -> bool {
        self.count == self.n_total
    }
}

/// Standard error of the grand mean from a set of (batch or replication) means.
pub fn std_error_of_means(means: &[f64]) -> f64 {
    let b = means.len();
    if b < 2 {
        return 0.0;
    }
    // A constant series has zero variance by definition; summing it in floats
    // does not, and deterministic paths rely on an exact zero here.
    if means.iter().all(|m| *m == means[0]) {
        return 0.0;
    }
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Sample mean and standard error of raw replication values.
pub fn pooled_mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, std_error_of_means(values))
}

/// Normal 95% interval half-width multiplier.
pub const Z95: f64 = 1.959963984540054;
