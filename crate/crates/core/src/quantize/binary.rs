use super::{lower_median, sign_binary, validate, Norm, ProjectionResult, QuantizedVector};
use crate::error::Result;

/// Nearest `s * {+1,-1}^D` in the Euclidean sense: `s = ||w||_1 / D`.
pub fn project_binary_l2(w: &[f64]) -> Result<ProjectionResult> {
    validate(w)?;
    let scale = w.iter().map(|x| x.abs()).sum::<f64>() / w.len() as f64;
    Ok(binary_result(w, scale, Norm::L2))
}

/// Nearest `s * {+1,-1}^D` in the `l1` sense: `s = median |w_j|`.
pub fn project_binary_l1(w: &[f64]) -> Result<ProjectionResult> {
    validate(w)?;
    let magnitudes: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let scale = lower_median(&magnitudes).unwrap_or(0.0);
    Ok(binary_result(w, scale, Norm::L1))
}

pub fn project_binary(w: &[f64], norm: Norm) -> Result<ProjectionResult> {
    match norm {
        Norm::L1 => project_binary_l1(w),
        Norm::L2 => project_binary_l2(w),
    }
}

fn binary_result(w: &[f64], scale: f64, norm: Norm) -> ProjectionResult {
    let codes = w.iter().map(|&x| sign_binary(x)).collect();
    let degenerate = w.iter().all(|&x| x == 0.0);
    ProjectionResult::new(
        w,
        QuantizedVector {
            scale,
            codes,
            bits: 1,
        },
        w.len(),
        norm,
        degenerate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_example() {
        let r = project_binary_l2(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(r.scale(), 2.0);
        assert_eq!(r.codes(), &[1, -1, 1]);
        assert!((r.objective - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.support_size, 3);
    }

    #[test]
    fn l1_examples() {
        let r = project_binary_l1(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(r.scale(), 2.0);
        assert_eq!(r.codes(), &[1, -1, 1]);
        assert_eq!(r.objective, 2.0);

        let r = project_binary_l1(&[1.0, -1.0, 10.0]).unwrap();
        assert_eq!(r.scale(), 1.0);
        assert_eq!(r.codes(), &[1, -1, 1]);
        assert_eq!(project_binary_l2(&[1.0, -1.0, 10.0]).unwrap().scale(), 4.0);

        let r = project_binary_l1(&[5.0]).unwrap();
        assert_eq!((r.scale(), r.objective), (5.0, 0.0));

        let r = project_binary_l1(&[1.0, -3.0]).unwrap();
        assert_eq!(r.scale(), 1.0);
        assert_eq!(r.objective, 2.0);
    }

    #[test]
    fn constant_vector_is_exact() {
        for c in [0.5, 3.0, 0.37] {
            for r in [
                project_binary_l1(&[c, c, c]).unwrap(),
                project_binary_l2(&[c, c, c]).unwrap(),
            ] {
                // the mean of three copies of 0.37 rounds by one ulp
                assert!((r.scale() - c).abs() <= f64::EPSILON * c);
                assert!(r.objective <= 4.0 * f64::EPSILON * c);
                assert_eq!(r.codes(), &[1, 1, 1]);
            }
        }
        let r = project_binary_l2(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((r.scale(), r.objective), (0.5, 0.0));
    }

    #[test]
    fn zero_vector_convention() {
        for norm in [Norm::L1, Norm::L2] {
            let r = project_binary(&[0.0, 0.0, 0.0], norm).unwrap();
            assert_eq!(r.scale(), 0.0);
            assert_eq!(r.codes(), &[1, 1, 1]);
            assert_eq!(r.objective, 0.0);
            assert!(r.degenerate);
        }
        assert!(!project_binary_l1(&[0.0, 1.0]).unwrap().degenerate);
    }

    #[test]
    fn sign_of_zero_is_positive() {
        let r = project_binary_l1(&[0.0, -2.0, 2.0]).unwrap();
        assert_eq!(r.codes(), &[1, -1, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_binary_l1(&[]).is_err());
        assert!(project_binary_l2(&[1.0, f64::NAN]).is_err());
        assert!(project_binary_l1(&[f64::INFINITY]).is_err());
    }
}
