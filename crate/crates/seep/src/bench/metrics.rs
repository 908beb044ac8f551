//! Error metrics for comparing a trained field against a reference.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("value counts differ: {num} numerical vs {reference} reference")]
    LengthMismatch { num: usize, reference: usize },
    #[error("empty value lists")]
    Empty,
    #[error("reference is identically zero, relative error is undefined")]
    ZeroReference,
}

/// Relative error in the L2 norm: the root sum of squared differences over
/// the root sum of squared reference values, both taken over the same
/// evaluation points (an unweighted discretization of the underlying
/// integral ratio).
pub fn e_l2(num: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    if num.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            num: num.len(),
            reference: reference.len(),
        });
    }
    if num.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (a, r) in num.iter().zip(reference) {
        diff_sq += (a - r) * (a - r);
        ref_sq += r * r;
    }
    if ref_sq == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok((diff_sq / ref_sq).sqrt())
}

/// Mean of the per-point relative errors |num − ref| / |ref|. The embankment
/// benchmark's published station comparison is quoted this way.
pub fn mean_relative_error(num: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    if num.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            num: num.len(),
            reference: reference.len(),
        });
    }
    if num.is_empty() {
        return Err(MetricsError::Empty);
    }
    if reference.contains(&0.0) {
        return Err(MetricsError::ZeroReference);
    }
    let sum: f64 = num
        .iter()
        .zip(reference)
        .map(|(a, r)| ((a - r) / r).abs())
        .sum();
    Ok(sum / num.len() as f64)
}
