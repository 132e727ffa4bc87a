//! Welch's unequal-variance t-test on two Welford accumulators.

use super::tree::ReturnStats;
use crate::error::{IppError, Result};
use crate::special::student_t_two_sided;

/// Two-sided Welch p-value comparing the means behind `a` and `b`.
///
/// When both sample variances vanish the test degenerates: equal means give
/// `p = 1`, different means give the limiting value `p = 0`.
pub fn welch_p_value(a: &ReturnStats, b: &ReturnStats) -> Result<f64> {
    if a.count < 2 || b.count < 2 {
        return Err(IppError::InsufficientSamples(a.count, b.count));
    }
    let (na, nb) = (a.count as f64, b.count as f64);
    let sa = a.sample_variance() / na;
    let sb = b.sample_variance() / nb;
    let se2 = sa + sb;
    let diff = a.mean - b.mean;
    let scale = a.mean.abs().max(b.mean.abs()).max(f64::MIN_POSITIVE);
    if se2 <= (1e-15 * scale).powi(2) {
        return Ok(if diff == 0.0 { 1.0 } else { 0.0 });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(student_t_two_sided(t, df))
}
