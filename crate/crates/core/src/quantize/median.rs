use crate::error::{Error, Result};

/// Lower median: the `floor((n - 1) / 2)`-th order statistic.
///
/// For even `n` every point between the two middle values minimizes the sum
/// of absolute deviations; the lower one is returned.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut buf = values.to_vec();
    let k = (buf.len() - 1) / 2;
    let (_, m, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
    Some(*m)
}

/// Minimizer of `sum_i weights[i] * |s - values[i]|`.
///
/// Pairs are sorted ascending by value; the result is the value at the first
/// index `k` where `total < 2 * cumulative_weight(k)`.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("weighted median of an empty sequence"));
    }
    if values.len() != weights.len() {
        return Err(Error::invalid(format!(
            "weighted median: {} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::invalid(format!(
            "weighted median: weight {} at index {i} is not positive",
            weights[i]
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "weighted median: non-finite value at index {i}"
        )));
    }

    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();

    let mut cumulative = 0.0;
    for &(v, h) in &pairs {
        cumulative += h;
        if total < 2.0 * cumulative {
            return Ok(v);
        }
    }
    // Reachable only through rounding in the cumulative sum.
    Ok(pairs[pairs.len() - 1].0)
}
