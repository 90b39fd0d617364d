use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Largest sample (after dropping zero differences) tested exactly.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample<T> {
    pub pairs: Vec<(T, T)>,
}

impl<T: Scalar> PairedSample<T> {
    pub fn new(pairs: Vec<(T, T)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("paired sample needs at least one pair".into()));
        }
        if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidInput("paired sample has non-finite values".into()));
        }
        Ok(Self { pairs })
    }

    pub fn from_columns(x: &[T], y: &[T]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "paired columns differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Self::new(x.iter().copied().zip(y.iter().copied()).collect())
    }

    pub fn differences(&self) -> Vec<T> {
        self.pairs.iter().map(|&(x, y)| x - y).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult<T> {
    /// min(W+, W−).
    pub w: T,
    pub w_plus: T,
    pub w_minus: T,
    /// Non-zero differences.
    pub n: usize,
    pub p_value: T,
    pub method: WilcoxonMethod,
}

/// Signed ranks as doubled integers, so mid-ranks stay exact.
struct Ranked {
    doubled: Vec<u64>,
    positive: Vec<bool>,
    tie_sizes: Vec<u64>,
}

fn rank<T: Scalar>(d: &[T]) -> Ranked {
    let mut nz: Vec<T> = d.iter().copied().filter(|v| *v != T::zero()).collect();
    nz.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite"));
    let n = nz.len();
    let mut doubled = vec![0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean; doubled it is i+j+2.
        for r in &mut doubled[i..=j] {
            *r = (i + j + 2) as u64;
        }
        tie_sizes.push((j - i + 1) as u64);
        i = j + 1;
    }
    Ranked {
        doubled,
        positive: nz.iter().map(|v| *v > T::zero()).collect(),
        tie_sizes,
    }
}

/// Two-sided signed-rank test. Zero differences are dropped; up to
/// [`EXACT_MAX_N`] remaining pairs use the exact null distribution, larger
/// samples the tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank<T: Scalar>(s: &PairedSample<T>) -> WilcoxonResult<T> {
    let r = rank(&s.differences());
    if r.doubled.len() <= EXACT_MAX_N {
        exact(&r)
    } else {
        normal_approx(&r)
    }
}

/// The normal approximation regardless of sample size.
pub fn wilcoxon_normal<T: Scalar>(s: &PairedSample<T>) -> WilcoxonResult<T> {
    normal_approx(&rank(&s.differences()))
}

fn sums(r: &Ranked) -> (u64, u64) {
    let plus: u64 = r
        .doubled
        .iter()
        .zip(&r.positive)
        .filter(|(_, p)| **p)
        .map(|(d, _)| d)
        .sum();
    let total: u64 = r.doubled.iter().sum();
    (plus, total - plus)
}

fn degenerate<T: Scalar>() -> WilcoxonResult<T> {
    WilcoxonResult {
        w: T::zero(),
        w_plus: T::zero(),
        w_minus: T::zero(),
        n: 0,
        p_value: T::one(),
        method: WilcoxonMethod::Degenerate,
    }
}

fn result<T: Scalar>(r: &Ranked, p: T, method: WilcoxonMethod) -> WilcoxonResult<T> {
    let (plus, minus) = sums(r);
    let half = |v: u64| T::from_u64(v).expect("rank sum") / T::c(2.0);
    WilcoxonResult {
        w: half(plus.min(minus)),
        w_plus: half(plus),
        w_minus: half(minus),
        n: r.doubled.len(),
        p_value: p,
        method,
    }
}

fn exact<T: Scalar>(r: &Ranked) -> WilcoxonResult<T> {
    let n = r.doubled.len();
    if n == 0 {
        return degenerate();
    }
    let (plus, minus) = sums(r);
    let w = plus.min(minus);
    let total = plus + minus;
    // counts[s] = number of sign patterns whose positive doubled-rank sum is s.
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &d in &r.doubled {
        let d = d as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + d] += counts[s];
            }
        }
        reach += d;
    }
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as u64).min(total - s as u64) <= w)
        .map(|(_, c)| c)
        .sum();
    let p = (extreme as f64 / (1u64 << n) as f64).min(1.0);
    result(r, T::c(p), WilcoxonMethod::Exact)
}

fn normal_approx<T: Scalar>(r: &Ranked) -> WilcoxonResult<T> {
    let n = r.doubled.len();
    if n == 0 {
        return degenerate();
    }
    let (plus, minus) = sums(r);
    let w = plus.min(minus) as f64 / 2.0;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = r
        .tie_sizes
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mean + 0.5) / var.sqrt()).min(0.0);
        (2.0 * normal::cdf(z)).min(1.0)
    };
    result(r, T::c(p), WilcoxonMethod::Normal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diffs(d: &[f64]) -> PairedSample<f64> {
        PairedSample::new(d.iter().map(|&v| (v, 0.0)).collect()).unwrap()
    }

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(r.w, 0.0);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_value, 2.0 / 32.0);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn symmetric_ties() {
        let r = wilcoxon_signed_rank(&diffs(&[-1.0, 1.0]));
        assert_eq!(r.w, 1.5);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let r = wilcoxon_signed_rank(&diffs(&[0.0, 0.0, 0.0]));
        assert_eq!(r.method, WilcoxonMethod::Degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zeros_are_dropped() {
        let a = wilcoxon_signed_rank(&diffs(&[0.0, 1.0, 2.0, -3.0]));
        let b = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, -3.0]));
        assert_eq!(a, b);
        assert_eq!(a.n, 3);
    }

    #[test]
    fn scale_invariant() {
        let d = [0.3, -1.2, 2.5, 0.7, -0.1, 4.0];
        let a = wilcoxon_signed_rank(&diffs(&d));
        let scaled: Vec<f64> = d.iter().map(|v| v * 7.5).collect();
        assert_eq!(a.p_value, wilcoxon_signed_rank(&diffs(&scaled)).p_value);
    }

    #[test]
    fn large_samples_use_normal() {
        let d: Vec<f64> = (1..=25).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let r = wilcoxon_signed_rank(&diffs(&d));
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn mismatched_columns_rejected() {
        assert!(PairedSample::from_columns(&[1.0, 2.0], &[1.0]).is_err());
        assert!(PairedSample::<f64>::new(vec![]).is_err());
    }
}
