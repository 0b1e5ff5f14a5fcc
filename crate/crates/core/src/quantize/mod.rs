//! Projections of a real vector onto scaled binary, ternary and m-bit sets.
//!
//! Every projector returns `z = s * q` with one nonnegative scale `s` for the
//! whole input and integer codes `q`. The `l2` projectors use mean-based
//! scales, the `l1` projectors median-based ones.

mod binary;
mod lloyd;
mod median;
mod ternary;

pub use binary::{project_binary, project_binary_l1, project_binary_l2};
pub use lloyd::{lloyd_mbit, lloyd_mbit_with_norm, Codebook, LloydOptions, LloydResult};
pub use median::{lower_median, weighted_median};
pub use ternary::{project_ternary, project_ternary_l1, project_ternary_l2, ternary_l2_scores};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Distance used to pick the nearest quantized vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" | "median" => Ok(Norm::L1),
            "l2" | "mean" => Ok(Norm::L2),
            other => Err(Error::invalid(format!(
                "unknown norm `{other}` (expected l1 or l2)"
            ))),
        }
    }
}

/// A scale and its integer codes; `dense()` is `scale * codes`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub scale: f64,
    pub codes: Vec<i32>,
    pub bits: u32,
}

impl QuantizedVector {
    pub fn dense(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|&c| self.scale * f64::from(c))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub quantized: QuantizedVector,
    /// `||dense(quantized) - w||` in `norm`.
    pub objective: f64,
    /// Number of nonzero components chosen (`D` for binary).
    pub support_size: usize,
    pub norm: Norm,
    /// Set when no positive scale exists (all-zero input) or when an
    /// iterative fit collapsed to all-zero codes.
    pub degenerate: bool,
}

impl ProjectionResult {
    pub(crate) fn new(
        w: &[f64],
        quantized: QuantizedVector,
        support_size: usize,
        norm: Norm,
        degenerate: bool,
    ) -> Self {
        let objective = norm.distance(&quantized.dense(), w);
        ProjectionResult {
            quantized,
            objective,
            support_size,
            norm,
            degenerate,
        }
    }

    pub fn scale(&self) -> f64 {
        self.quantized.scale
    }

    pub fn codes(&self) -> &[i32] {
        &self.quantized.codes
    }

    pub fn dense(&self) -> Vec<f64> {
        self.quantized.dense()
    }
}

pub(crate) fn validate(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if let Some(j) = w.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite entry {} at index {j}",
            w[j]
        )));
    }
    Ok(())
}

/// Binary sign: `+1` for `x >= 0`, `-1` otherwise.
#[inline]
pub fn sign_binary(x: f64) -> i32 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Ternary sign: `0` at zero.
#[inline]
pub fn sign_ternary(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Relaxed projection `(lambda * proj(w_f) + w_f) / (lambda + 1)` with a
/// binary projector in `norm`.
///
/// The output is clamped to the segment between `w_f` and the hard
/// projection so rounding never leaves the convex hull.
pub fn relax_projection(w_f: &[f64], lambda: f64, norm: Norm) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "relaxation lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let hard = project_binary(w_f, norm)?.dense();
    Ok(relax_towards(w_f, &hard, lambda))
}

pub(crate) fn relax_towards(w_f: &[f64], hard: &[f64], lambda: f64) -> Vec<f64> {
    w_f.iter()
        .zip(hard)
        .map(|(&f, &h)| {
            let v = (lambda * h + f) / (lambda + 1.0);
            v.clamp(f.min(h), f.max(h))
        })
        .collect()
}
