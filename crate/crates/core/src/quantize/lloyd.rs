use std::fmt;
use std::str::FromStr;

use super::{lower_median, project_binary_l1, sign_binary, validate, weighted_median, Norm};
use super::{ProjectionResult, QuantizedVector};
use crate::error::{Error, Result};

/// Admissible code magnitudes `{q_1 < ... < q_m}`, used with both signs and
/// optionally with zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    levels: Vec<u32>,
    zero: bool,
}

impl Codebook {
    pub fn new(levels: Vec<u32>, zero: bool) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("codebook needs at least one level"));
        }
        if levels[0] == 0 {
            return Err(Error::invalid(
                "codebook levels must be positive (admit zero with the zero flag)",
            ));
        }
        if levels.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::invalid(format!(
                "codebook levels must be strictly increasing, got {levels:?}"
            )));
        }
        Ok(Codebook { levels, zero })
    }

    pub fn binary() -> Self {
        Codebook {
            levels: vec![1],
            zero: false,
        }
    }

    pub fn ternary() -> Self {
        Codebook {
            levels: vec![1],
            zero: true,
        }
    }

    /// Symmetric `bits`-bit grid `{0, +-1, ..., +-(2^(bits-1) - 1)}`; one bit
    /// gives the binary codebook.
    pub fn for_bits(bits: u32) -> Result<Self> {
        match bits {
            0 => Err(Error::invalid("bit width must be >= 1")),
            1 => Ok(Self::binary()),
            2..=16 => {
                let top = (1u32 << (bits - 1)) - 1;
                Codebook::new((1..=top).collect(), true)
            }
            _ => Err(Error::invalid(format!("bit width {bits} is too large"))),
        }
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn admits_zero(&self) -> bool {
        self.zero
    }

    /// Number of distinct quantized states.
    pub fn states(&self) -> usize {
        2 * self.levels.len() + usize::from(self.zero)
    }

    pub fn bits(&self) -> u32 {
        let states = self.states() as u32;
        u32::BITS - (states - 1).leading_zeros()
    }

    /// Every admissible code, ascending.
    pub fn codes(&self) -> Vec<i32> {
        let mut out: Vec<i32> = self.levels.iter().rev().map(|&l| -(l as i32)).collect();
        if self.zero {
            out.push(0);
        }
        out.extend(self.levels.iter().map(|&l| l as i32));
        out
    }

    /// Nearest code to `x` given scale `s`; ties go to the smaller |code|.
    fn assign(&self, x: f64, s: f64) -> i32 {
        let sign = sign_binary(x);
        let a = x.abs();
        let (mut best, mut best_d) = if self.zero {
            (0, a)
        } else {
            (0, f64::INFINITY)
        };
        for &level in &self.levels {
            let d = (s * f64::from(level) - a).abs();
            if d < best_d {
                best = level as i32;
                best_d = d;
            }
        }
        sign * best
    }
}

impl fmt::Display for Codebook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if self.zero {
            parts.push("0".into());
        }
        parts.extend(self.levels.iter().map(u32::to_string));
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Codebook {
    type Err = Error;

    /// Comma-separated levels; a leading `0` admits the zero code.
    fn from_str(s: &str) -> Result<Self> {
        let mut zero = false;
        let mut levels = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let v: u32 = tok
                .parse()
                .map_err(|_| Error::invalid(format!("bad codebook level `{tok}`")))?;
            if v == 0 {
                if zero || !levels.is_empty() {
                    return Err(Error::invalid("zero must appear once, first"));
                }
                zero = true;
            } else {
                levels.push(v);
            }
        }
        Codebook::new(levels, zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub max_iters: usize,
    /// Stop once an iteration lowers the objective by less than this.
    pub tol: f64,
    /// Starting scale; defaults to the median magnitude of the input.
    pub init_scale: Option<f64>,
}

impl Default for LloydOptions {
    fn default() -> Self {
        LloydOptions {
            max_iters: 50,
            tol: 1e-10,
            init_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydResult {
    pub result: ProjectionResult,
    /// Objective after the first assignment, then after each scale update.
    pub history: Vec<f64>,
    /// Completed (assignment, scale) rounds.
    pub iterations: usize,
    pub converged: bool,
}

/// Alternating `l1` fit of `w` by `s * q` with `q` drawn from `codebook`.
///
/// The assignment step picks each code nearest to `w_j / s`; the scale step
/// is the weighted median of `w_j / q_j` with weights `|q_j|`.
pub fn lloyd_mbit(w: &[f64], codebook: &Codebook, opts: &LloydOptions) -> Result<LloydResult> {
    lloyd_mbit_with_norm(w, codebook, opts, Norm::L1)
}

/// Same alternation in either norm; the `l2` scale step is the
/// least-squares fit `<q, w> / <q, q>`.
pub fn lloyd_mbit_with_norm(
    w: &[f64],
    codebook: &Codebook,
    opts: &LloydOptions,
    norm: Norm,
) -> Result<LloydResult> {
    validate(w)?;
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be >= 1"));
    }
    let bits = codebook.bits();
    let finish = |scale: f64, codes: Vec<i32>, degenerate: bool| {
        let support = codes.iter().filter(|&&c| c != 0).count();
        ProjectionResult::new(
            w,
            QuantizedVector { scale, codes, bits },
            support,
            norm,
            degenerate,
        )
    };

    let mut s = match opts.init_scale {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => {
            return Err(Error::invalid(format!(
                "initial scale must be positive, got {s}"
            )))
        }
        None => initial_scale(w)?,
    };
    if s == 0.0 {
        let codes = w.iter().map(|_| codebook.assign(0.0, 0.0)).collect();
        return Ok(LloydResult {
            result: finish(0.0, codes, true),
            history: vec![0.0],
            iterations: 0,
            converged: true,
        });
    }

    let objective = |s: f64, codes: &[i32]| -> f64 {
        let z: Vec<f64> = codes.iter().map(|&c| s * f64::from(c)).collect();
        norm.distance(&z, w)
    };

    let mut codes: Vec<i32> = w.iter().map(|&x| codebook.assign(x, s)).collect();
    let mut history = vec![objective(s, &codes)];
    let mut iterations = 0;
    let mut converged = false;

    for round in 0..opts.max_iters {
        if round > 0 {
            let next: Vec<i32> = w.iter().map(|&x| codebook.assign(x, s)).collect();
            if next == codes {
                converged = true;
                break;
            }
            codes = next;
        }
        if codes.iter().all(|&c| c == 0) {
            return Ok(LloydResult {
                result: finish(s, codes, true),
                history,
                iterations,
                converged: false,
            });
        }
        s = fit_scale(w, &codes, norm)?;
        iterations += 1;
        let obj = objective(s, &codes);
        let previous = *history.last().expect("history starts non-empty");
        history.push(obj);
        if round > 0 && previous - obj < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(LloydResult {
        result: finish(s, codes, false),
        history,
        iterations,
        converged,
    })
}

fn initial_scale(w: &[f64]) -> Result<f64> {
    let s = project_binary_l1(w)?.scale();
    if s > 0.0 {
        return Ok(s);
    }
    // median magnitude is zero when most entries are; fall back to the
    // median of the nonzero magnitudes
    let nonzero: Vec<f64> = w.iter().filter(|x| **x != 0.0).map(|x| x.abs()).collect();
    Ok(lower_median(&nonzero).unwrap_or(0.0))
}

fn fit_scale(w: &[f64], codes: &[i32], norm: Norm) -> Result<f64> {
    match norm {
        Norm::L1 => {
            let (values, weights): (Vec<f64>, Vec<f64>) = w
                .iter()
                .zip(codes)
                .filter(|(_, &c)| c != 0)
                .map(|(&x, &c)| (x / f64::from(c), f64::from(c.abs())))
                .unzip();
            Ok(weighted_median(&values, &weights)?.max(0.0))
        }
        Norm::L2 => {
            let (num, den) = w.iter().zip(codes).fold((0.0, 0.0), |(n, d), (&x, &c)| {
                let c = f64::from(c);
                (n + c * x, d + c * c)
            });
            Ok((num / den).max(0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codebook_validation() {
        assert!(Codebook::new(vec![], false).is_err());
        assert!(Codebook::new(vec![2, 1], false).is_err());
        assert!(Codebook::new(vec![1, 1], false).is_err());
        assert!(Codebook::new(vec![0, 1], false).is_err());
        let cb: Codebook = "0,1,2".parse().unwrap();
        assert!(cb.admits_zero());
        assert_eq!(cb.levels(), &[1, 2]);
        assert_eq!(cb.codes(), vec![-2, -1, 0, 1, 2]);
        assert_eq!(cb.bits(), 3);
        assert_eq!(cb.to_string(), "0,1,2");
        assert!("1,0".parse::<Codebook>().is_err());
        assert_eq!(Codebook::for_bits(1).unwrap(), Codebook::binary());
        assert_eq!(Codebook::for_bits(2).unwrap(), Codebook::ternary());
        assert_eq!(Codebook::for_bits(3).unwrap().levels(), &[1, 2, 3]);
        assert_eq!(Codebook::binary().bits(), 1);
        assert_eq!(Codebook::ternary().bits(), 2);
    }

    #[test]
    fn assignment_ties_prefer_smaller_code() {
        let cb = Codebook::new(vec![1, 2], true).unwrap();
        // |1.5 - 1| == |1.5 - 2|
        assert_eq!(cb.assign(1.5, 1.0), 1);
        assert_eq!(cb.assign(-1.5, 1.0), -1);
        // |0.5 - 0| == |0.5 - 1|
        assert_eq!(cb.assign(0.5, 1.0), 0);
    }

    #[test]
    fn hand_iterated_example() {
        let cb = Codebook::new(vec![1, 2], false).unwrap();
        let opts = LloydOptions {
            init_scale: Some(1.0),
            ..Default::default()
        };
        let out = lloyd_mbit(&[0.5, 2.0, -0.8], &cb, &opts).unwrap();
        assert_eq!(out.result.codes(), &[1, 2, -1]);
        assert_eq!(out.result.scale(), 1.0);
        assert!((out.result.objective - 0.7).abs() < 1e-12);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!(!out.result.degenerate);
    }

    #[test]
    fn exactly_representable_converges_immediately() {
        let cb = Codebook::new(vec![1, 2, 3], true).unwrap();
        let s0 = 0.75;
        let w: Vec<f64> = [3, -1, 0, 2, 1]
            .iter()
            .map(|&c| s0 * f64::from(c))
            .collect();
        let opts = LloydOptions {
            init_scale: Some(s0),
            ..Default::default()
        };
        let out = lloyd_mbit(&w, &cb, &opts).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.result.objective, 0.0);
        assert_eq!(out.result.codes(), &[3, -1, 0, 2, 1]);
    }

    #[test]
    fn collapses_to_degenerate_on_zero_codes() {
        let cb = Codebook::ternary();
        let opts = LloydOptions {
            init_scale: Some(100.0),
            ..Default::default()
        };
        let out = lloyd_mbit(&[0.1, -0.2], &cb, &opts).unwrap();
        assert!(out.result.degenerate);
        assert_eq!(out.result.codes(), &[0, 0]);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        let out = lloyd_mbit(&[0.0, 0.0], &Codebook::binary(), &LloydOptions::default()).unwrap();
        assert!(out.result.degenerate);
        assert_eq!(out.result.objective, 0.0);
    }

    #[test]
    fn history_is_monotone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cb = Codebook::new(vec![1, 2, 4], true).unwrap();
        for norm in [Norm::L1, Norm::L2] {
            for _ in 0..300 {
                let d = rng.random_range(2..40);
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let out = lloyd_mbit_with_norm(&w, &cb, &LloydOptions::default(), norm).unwrap();
                for pair in out.history.windows(2) {
                    assert!(pair[1] <= pair[0] + 1e-12, "{:?}", out.history);
                }
            }
        }
    }

    #[test]
    fn binary_codebook_recovers_median_projection() {
        let w = [0.3, -1.2, 2.5, -0.7, 0.9];
        let out = lloyd_mbit(&w, &Codebook::binary(), &LloydOptions::default()).unwrap();
        let direct = project_binary_l1(&w).unwrap();
        assert!((out.result.objective - direct.objective).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_options() {
        let cb = Codebook::binary();
        let bad = LloydOptions {
            max_iters: 0,
            ..Default::default()
        };
        assert!(lloyd_mbit(&[1.0], &cb, &bad).is_err());
        let bad = LloydOptions {
            init_scale: Some(-1.0),
            ..Default::default()
        };
        assert!(lloyd_mbit(&[1.0], &cb, &bad).is_err());
    }
}
