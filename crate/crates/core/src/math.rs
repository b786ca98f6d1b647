//! Transcendental functions backed by `libm`, so results are identical
//! with and without `std` and across platforms.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// Numerically stable `ln(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(s)
}

/// Softmax with max subtraction.
pub fn softmax(xs: &[f64]) -> alloc::vec::Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: alloc::vec::Vec<f64> = xs.iter().map(|&x| exp(x - max)).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}
