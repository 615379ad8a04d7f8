//! Small numerical helpers shared across modules.

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so the result is independent of how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// `ln Σ exp(v_i)` evaluated stably.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Binomial coefficient as `f64`, exact for the sizes used by index sets.
pub fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k.min(n));
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Composite trapezoid rule on `n` equispaced points including both ends.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut inner = values[1..n - 1].to_vec();
    inner.push(0.5 * (values[0] + values[n - 1]));
    h * pairwise_sum(&inner)
}
