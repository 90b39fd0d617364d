use crate::num::Scalar;

/// Holm's step-down procedure; flags are in input order.
pub fn holm_bonferroni<T: Scalar>(p_values: &[T], alpha: T) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).expect("p-value"));
    let mut reject = vec![false; m];
    for (i, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / T::from_usize_lossy(m - i) {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

/// Holm-adjusted p-values: running max of (m − i)·p₍ᵢ₎, capped at 1.
pub fn holm_adjusted<T: Scalar>(p_values: &[T]) -> Vec<T> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).expect("p-value"));
    let mut out = vec![T::zero(); m];
    let mut running = T::zero();
    for (i, &idx) in order.iter().enumerate() {
        running = running.max(T::from_usize_lossy(m - i) * p_values[idx]).min(T::one());
        out[idx] = running;
    }
    out
}
