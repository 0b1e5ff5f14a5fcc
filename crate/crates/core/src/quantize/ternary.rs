use super::{sign_ternary, validate, Norm, ProjectionResult, QuantizedVector};
use crate::error::Result;

/// Indices ordered by decreasing magnitude; equal magnitudes keep index order.
fn magnitude_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()));
    order
}

/// `prefix[k]` is the sum of the `k` largest magnitudes.
fn prefix_sums(sorted: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &a in sorted {
        acc += a;
        prefix.push(acc);
    }
    prefix
}

fn ternary_result(
    w: &[f64],
    order: &[usize],
    t: usize,
    scale: f64,
    norm: Norm,
) -> ProjectionResult {
    let mut codes = vec![0; w.len()];
    for &j in &order[..t] {
        codes[j] = sign_ternary(w[j]);
    }
    ProjectionResult::new(
        w,
        QuantizedVector {
            scale,
            codes,
            bits: 2,
        },
        t,
        norm,
        false,
    )
}

fn zero_result(w: &[f64], norm: Norm) -> ProjectionResult {
    ProjectionResult::new(
        w,
        QuantizedVector {
            scale: 0.0,
            codes: vec![0; w.len()],
            bits: 2,
        },
        0,
        norm,
        true,
    )
}

/// Nearest `s * {0,+1,-1}^D` in the `l1` sense.
///
/// For each support size `t` the support is the `t` largest magnitudes and
/// the scale is their lower median; the `t` with the smallest objective
/// wins, smaller `t` on ties.
pub fn project_ternary_l1(w: &[f64]) -> Result<ProjectionResult> {
    validate(w)?;
    if w.iter().all(|&x| x == 0.0) {
        return Ok(zero_result(w, Norm::L1));
    }
    let order = magnitude_order(w);
    let sorted: Vec<f64> = order.iter().map(|&j| w[j].abs()).collect();
    let prefix = prefix_sums(&sorted);
    let total = prefix[sorted.len()];

    let mut best = (f64::INFINITY, 1, 0.0);
    for t in 1..=sorted.len() {
        // sorted is descending, so the lower median sits at position m
        let m = t - 1 - (t - 1) / 2;
        let s = sorted[m];
        let above = prefix[m] - m as f64 * s;
        let below = (t - 1 - m) as f64 * s - (prefix[t] - prefix[m + 1]);
        let tail = total - prefix[t];
        let objective = tail + above + below;
        if objective < best.0 {
            best = (objective, t, s);
        }
    }
    let (_, t, s) = best;
    Ok(ternary_result(w, &order, t, s, Norm::L1))
}

/// Nearest `s * {0,+1,-1}^D` in the Euclidean sense:
/// `t* = argmax ||w_[t]||_1^2 / t`, `s = ||w_[t*]||_1 / t*`.
pub fn project_ternary_l2(w: &[f64]) -> Result<ProjectionResult> {
    validate(w)?;
    if w.iter().all(|&x| x == 0.0) {
        return Ok(zero_result(w, Norm::L2));
    }
    let order = magnitude_order(w);
    let sorted: Vec<f64> = order.iter().map(|&j| w[j].abs()).collect();
    let prefix = prefix_sums(&sorted);

    let mut best = (f64::NEG_INFINITY, 1);
    for (t, &p) in prefix.iter().enumerate().skip(1) {
        let score = p * p / t as f64;
        if score > best.0 {
            best = (score, t);
        }
    }
    let t = best.1;
    Ok(ternary_result(w, &order, t, prefix[t] / t as f64, Norm::L2))
}

pub fn project_ternary(w: &[f64], norm: Norm) -> Result<ProjectionResult> {
    match norm {
        Norm::L1 => project_ternary_l1(w),
        Norm::L2 => project_ternary_l2(w),
    }
}

/// `||w_[t]||_1^2 / t` for every `t`, in order; exposed for diagnostics.
pub fn ternary_l2_scores(w: &[f64]) -> Vec<f64> {
    let order = magnitude_order(w);
    let sorted: Vec<f64> = order.iter().map(|&j| w[j].abs()).collect();
    let prefix = prefix_sums(&sorted);
    (1..=sorted.len())
        .map(|t| prefix[t] * prefix[t] / t as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct O(t) evaluation of the objective for the t largest entries.
    fn l1_objective_for_t(w: &[f64], t: usize) -> f64 {
        let order = magnitude_order(w);
        let mut mags: Vec<f64> = order[..t].iter().map(|&j| w[j].abs()).collect();
        mags.sort_by(f64::total_cmp);
        let s = mags[(t - 1) / 2];
        let tail: f64 = order[t..].iter().map(|&j| w[j].abs()).sum();
        tail + mags.iter().map(|a| (s - a).abs()).sum::<f64>()
    }

    #[test]
    fn l1_example() {
        let w = [0.1, -0.9, 1.0];
        assert!((l1_objective_for_t(&w, 1) - 1.0).abs() < 1e-15);
        assert!((l1_objective_for_t(&w, 2) - 0.2).abs() < 1e-15);
        assert!((l1_objective_for_t(&w, 3) - 0.9).abs() < 1e-15);
        let r = project_ternary_l1(&w).unwrap();
        assert_eq!(r.support_size, 2);
        assert_eq!(r.scale(), 0.9);
        assert_eq!(r.codes(), &[0, -1, 1]);
        assert!((r.objective - 0.2).abs() < 1e-15);
    }

    #[test]
    fn l2_example() {
        let w = [0.1, -0.9, 1.0];
        let scores = ternary_l2_scores(&w);
        let expect = [1.0, 1.805, 2.0f64 * 2.0 / 3.0];
        for (s, e) in scores.iter().zip(expect) {
            assert!((s - e).abs() < 1e-12, "{s} vs {e}");
        }
        let r = project_ternary_l2(&w).unwrap();
        assert_eq!(r.support_size, 2);
        assert!((r.scale() - 0.95).abs() < 1e-15);
        assert_eq!(r.codes(), &[0, -1, 1]);
    }

    #[test]
    fn exact_and_trivial_cases() {
        let r = project_ternary_l1(&[2.0, 2.0]).unwrap();
        assert_eq!((r.support_size, r.scale(), r.objective), (2, 2.0, 0.0));
        assert_eq!(r.codes(), &[1, 1]);

        let r = project_ternary_l2(&[1.5, 0.0, 0.0]).unwrap();
        assert_eq!((r.support_size, r.scale(), r.objective), (1, 1.5, 0.0));
        assert_eq!(r.codes(), &[1, 0, 0]);

        let r = project_ternary_l2(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((r.support_size, r.scale()), (4, 1.0));
        assert_eq!(r.codes(), &[1, 1, 1, 1]);
    }

    #[test]
    fn zero_vector() {
        for r in [
            project_ternary_l1(&[0.0; 3]).unwrap(),
            project_ternary_l2(&[0.0; 3]).unwrap(),
        ] {
            assert_eq!(r.scale(), 0.0);
            assert_eq!(r.codes(), &[0, 0, 0]);
            assert_eq!(r.objective, 0.0);
            assert!(r.degenerate);
        }
    }

    #[test]
    fn support_size_ties_prefer_smaller_t() {
        // t = 1: tail 1; t = 2: |1 - 2| = 1
        let r = project_ternary_l1(&[2.0, 1.0]).unwrap();
        assert_eq!(r.support_size, 1);
        assert_eq!(r.codes(), &[1, 0]);
    }

    #[test]
    fn magnitude_order_is_stable() {
        assert_eq!(magnitude_order(&[1.0, -3.0, 3.0, -1.0]), vec![1, 2, 0, 3]);
    }

    #[test]
    fn prefix_scan_matches_direct_objective() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let d = rng.random_range(1..20);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = project_ternary_l1(&w).unwrap();
            let direct = (1..=d)
                .map(|t| l1_objective_for_t(&w, t))
                .fold(f64::INFINITY, f64::min);
            assert!((r.objective - direct).abs() < 1e-12);
        }
    }
}
