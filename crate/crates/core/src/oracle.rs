//! Brute-force reference projections.
//!
//! These search exhaustively over codes and candidate scales and share no
//! code with the closed-form projectors in [`crate::quantize`]. They are
//! exponential in the input length, so every entry point enforces a cap.

use crate::error::{Error, Result};
use crate::quantize::{Codebook, Norm, ProjectionResult, QuantizedVector};

pub const MAX_BINARY_DIM: usize = 12;
pub const MAX_TERNARY_DIM: usize = 10;
pub const MAX_MBIT_DIM: usize = 6;
pub const MAX_MBIT_LEVELS: usize = 3;

const SAFETY_GRID: usize = 10_000;

fn check(w: &[f64], cap: usize, what: &str) -> Result<()> {
    if w.is_empty() || w.len() > cap {
        return Err(Error::invalid(format!(
            "{what} oracle supports 1..={cap} components, got {}",
            w.len()
        )));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} oracle: non-finite input")));
    }
    Ok(())
}

fn cost(w: &[f64], codes: &[i32], s: f64, norm: Norm) -> f64 {
    let mut acc = 0.0;
    for (x, &c) in w.iter().zip(codes) {
        let r = s * c as f64 - x;
        acc += match norm {
            Norm::L1 => r.abs(),
            Norm::L2 => r * r,
        };
    }
    match norm {
        Norm::L1 => acc,
        Norm::L2 => acc.sqrt(),
    }
}

fn best_scale(w: &[f64], codes: &[i32], candidates: &[f64], norm: Norm) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for &s in candidates {
        let c = cost(w, codes, s, norm);
        if c < best.0 {
            best = (c, s);
        }
    }
    best
}

fn build(w: &[f64], codes: Vec<i32>, scale: f64, bits: u32, norm: Norm) -> ProjectionResult {
    let support = codes.iter().filter(|&&c| c != 0).count();
    let degenerate = w.iter().all(|&x| x == 0.0);
    ProjectionResult::new(
        w,
        QuantizedVector { scale, codes, bits },
        support,
        norm,
        degenerate,
    )
}

/// Binary projection with `q = sgn(w)` fixed and `s` scanned over every
/// magnitude, the mean magnitude, and a uniform grid on `[0, max |w_j|]`.
pub fn oracle_binary(w: &[f64], norm: Norm) -> Result<ProjectionResult> {
    check(w, MAX_BINARY_DIM, "binary")?;
    let codes: Vec<i32> = w.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect();
    let mags: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let mut candidates = mags.clone();
    candidates.push(mags.iter().sum::<f64>() / w.len() as f64);
    candidates.extend((0..=SAFETY_GRID).map(|i| max * i as f64 / SAFETY_GRID as f64));
    let (_, s) = best_scale(w, &codes, &candidates, norm);
    Ok(build(w, codes, s, 1, norm))
}

/// Calls `visit` on every vector in `alphabet^len`, in lexicographic order.
fn for_each_assignment(alphabet: &[i32], len: usize, mut visit: impl FnMut(&[i32])) {
    let mut digits = vec![0usize; len];
    let mut codes = vec![alphabet[0]; len];
    loop {
        visit(&codes);
        let mut k = 0;
        loop {
            if k == len {
                return;
            }
            digits[k] += 1;
            if digits[k] < alphabet.len() {
                codes[k] = alphabet[digits[k]];
                break;
            }
            digits[k] = 0;
            codes[k] = alphabet[0];
            k += 1;
        }
    }
}

fn scale_candidates(w: &[f64], codes: &[i32], norm: Norm) -> Vec<f64> {
    match norm {
        // l1 minimizers sit at a breakpoint w_j / q_j
        Norm::L1 => {
            let mut c: Vec<f64> = w
                .iter()
                .zip(codes)
                .filter(|(_, &q)| q != 0)
                .map(|(x, &q)| (x / q as f64).max(0.0))
                .collect();
            c.push(0.0);
            c
        }
        Norm::L2 => {
            let (num, den) = w.iter().zip(codes).fold((0.0, 0.0), |(n, d), (x, &q)| {
                (n + x * q as f64, d + (q * q) as f64)
            });
            vec![(num / den).max(0.0), 0.0]
        }
    }
}

fn exhaustive(w: &[f64], alphabet: &[i32], bits: u32, norm: Norm) -> ProjectionResult {
    let zero_input = w.iter().all(|&x| x == 0.0);
    let mut best: Option<(f64, f64, Vec<i32>)> = None;
    for_each_assignment(alphabet, w.len(), |codes| {
        if codes.iter().all(|&c| c == 0) {
            return;
        }
        let (c, s) = best_scale(w, codes, &scale_candidates(w, codes, norm), norm);
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, s, codes.to_vec()));
        }
    });
    match best {
        Some((_, s, codes)) if !zero_input => build(w, codes, s, bits, norm),
        _ => build(w, vec![0; w.len()], 0.0, bits, norm),
    }
}

/// Global ternary projection by enumerating all of `{0,+1,-1}^D`.
pub fn oracle_ternary(w: &[f64], norm: Norm) -> Result<ProjectionResult> {
    check(w, MAX_TERNARY_DIM, "ternary")?;
    Ok(exhaustive(w, &[-1, 0, 1], 2, norm))
}

pub fn oracle_ternary_l1(w: &[f64]) -> Result<ProjectionResult> {
    oracle_ternary(w, Norm::L1)
}

/// Global `l1` fit over every assignment of codebook codes.
pub fn oracle_mbit_l1(w: &[f64], codebook: &Codebook) -> Result<ProjectionResult> {
    oracle_mbit(w, codebook, Norm::L1)
}

pub fn oracle_mbit(w: &[f64], codebook: &Codebook, norm: Norm) -> Result<ProjectionResult> {
    check(w, MAX_MBIT_DIM, "m-bit")?;
    if codebook.levels().len() > MAX_MBIT_LEVELS {
        return Err(Error::invalid(format!(
            "m-bit oracle supports at most {MAX_MBIT_LEVELS} levels, got {}",
            codebook.levels().len()
        )));
    }
    Ok(exhaustive(w, &codebook.codes(), codebook.bits(), norm))
}
