use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Bca,
    /// Every resample fell on one side of the estimate.
    Percentile,
    /// Constant input.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
    pub estimate: T,
    pub z0: T,
    pub acceleration: T,
    pub method: IntervalMethod,
}

/// Bootstrap replicates of `statistic`. Resample `b` draws its `n` indices
/// in order from a ChaCha8 stream seeded with `seed`.
pub fn replicates<T, F>(values: &[T], statistic: &F, b: usize, seed: u64) -> Vec<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T + ?Sized,
{
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![T::zero(); n];
    (0..b)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[rng.gen_range(0..n)];
            }
            statistic(&buf)
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    let h = T::from_usize_lossy(n - 1) * p.max(T::zero()).min(T::one());
    let lo = h.floor();
    let i = lo.to_usize().expect("index");
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

/// Bias-corrected and accelerated bootstrap interval at level `1 - alpha`.
pub fn bootstrap_bca<T, F>(values: &[T], statistic: &F, b: usize, alpha: T, seed: u64) -> Result<Interval<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> T + ?Sized,
{
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidParameter("bootstrap needs at least two values".into()));
    }
    if b < 100 {
        return Err(Error::InvalidParameter("bootstrap needs at least 100 resamples".into()));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!("alpha {alpha:?} outside (0, 1)")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("bootstrap values must be finite".into()));
    }
    let estimate = statistic(values);
    if values.iter().all(|v| *v == values[0]) {
        return Ok(Interval {
            lo: estimate,
            hi: estimate,
            estimate,
            z0: T::zero(),
            acceleration: T::zero(),
            method: IntervalMethod::Degenerate,
        });
    }
    let mut reps = replicates(values, statistic, b, seed);
    reps.sort_by(|x, y| x.partial_cmp(y).expect("finite statistic"));
    let bf = T::from_usize_lossy(b);
    let below = reps.iter().filter(|r| **r < estimate).count();
    let half = alpha / T::c(2.0);
    if below == 0 || below == b {
        return Ok(Interval {
            lo: quantile_sorted(&reps, half),
            hi: quantile_sorted(&reps, T::one() - half),
            estimate,
            z0: T::zero(),
            acceleration: T::zero(),
            method: IntervalMethod::Percentile,
        });
    }
    let z0 = normal::quantile(T::from_usize_lossy(below) / bf);

    let mut loo = Vec::with_capacity(n - 1);
    let jack: Vec<T> = (0..n)
        .map(|i| {
            loo.clear();
            loo.extend(values[..i].iter().chain(&values[i + 1..]).copied());
            statistic(&loo)
        })
        .collect();
    let mean = jack.iter().fold(T::zero(), |a, &v| a + v) / T::from_usize_lossy(n);
    let (mut num, mut den) = (T::zero(), T::zero());
    for &j in &jack {
        let d = mean - j;
        num = num + d * d * d;
        den = den + d * d;
    }
    let acceleration = if den > T::zero() {
        num / (T::c(6.0) * den.powf(T::c(1.5)))
    } else {
        T::zero()
    };

    let adjust = |p: T| {
        let z = normal::quantile(p);
        normal::cdf(z0 + (z0 + z) / (T::one() - acceleration * (z0 + z)))
    };
    Ok(Interval {
        lo: quantile_sorted(&reps, adjust(half)),
        hi: quantile_sorted(&reps, adjust(T::one() - half)),
        estimate,
        z0,
        acceleration,
        method: IntervalMethod::Bca,
    })
}

pub fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize_lossy(v.len())
}

pub fn median<T: Scalar>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / T::c(2.0)
    }
}
