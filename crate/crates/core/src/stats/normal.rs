//! Standard normal distribution function and its inverse.

use crate::num::Scalar;

/// Complementary error function, accurate to a few ulps in `f64`.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        return T::c(2.0) - erfc(-x);
    }
    if x < T::c(0.5) {
        T::one() - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

// erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1)); every term is
// positive so there is no cancellation.
fn erf_series<T: Scalar>(x: T) -> T {
    let two_x2 = T::c(2.0) * x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = T::one();
    for _ in 0..200 {
        k = k + T::c(2.0);
        term = term * two_x2 / k;
        sum = sum + term;
        if term < sum * T::epsilon() {
            break;
        }
    }
    T::c(2.0 / std::f64::consts::PI.sqrt()) * (-x * x).exp() * sum
}

// Lentz evaluation of erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))).
fn erfc_continued_fraction<T: Scalar>(x: T) -> T {
    let tiny = T::min_positive_value() * T::c(1e10);
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for i in 1..20_000 {
        let a = T::from_usize_lossy(i) * T::c(0.5);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (f * T::c(std::f64::consts::PI.sqrt()))
}

/// Φ(x).
pub fn cdf<T: Scalar>(x: T) -> T {
    T::c(0.5) * erfc(-x / T::c(std::f64::consts::SQRT_2))
}

/// Φ⁻¹(p): Acklam's rational approximation polished by one Halley step.
pub fn quantile<T: Scalar>(p: T) -> T {
    if p <= T::zero() {
        return T::neg_infinity();
    }
    if p >= T::one() {
        return T::infinity();
    }
    // Published coefficients, kept at their printed precision.
    #[allow(clippy::excessive_precision)]
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let pf = p.to_f64().expect("finite");
    let low = 0.02425;
    let x = if pf < low {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if pf <= 1.0 - low {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - pf).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = T::c(x);
    let e = cdf(x) - p;
    let u = e * T::c((2.0 * std::f64::consts::PI).sqrt()) * (x * x / T::c(2.0)).exp();
    x - u / (T::one() + x * u / T::c(2.0))
}
