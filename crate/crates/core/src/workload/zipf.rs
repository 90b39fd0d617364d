use crate::error::{Error, Result};
use crate::num::Scalar;

/// Normalized Zipf shares `p_k = k^-s / H` for ranks `k = 1..=n`.
///
/// Shares are non-increasing in rank and sum to one.
pub fn zipf_shares<T: Scalar>(n: usize, s: T) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("zipf_shares: n must be >= 1".into()));
    }
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "zipf_shares: exponent must be positive and finite, got {s:?}"
        )));
    }
    let weights: Vec<T> = (1..=n)
        .map(|k| T::from_usize_lossy(k).powf(-s))
        .collect();
    // Sum smallest first to keep the normalizer tight.
    let total = weights.iter().rev().fold(T::zero(), |acc, &w| acc + w);
    Ok(weights.into_iter().map(|w| w / total).collect())
}
