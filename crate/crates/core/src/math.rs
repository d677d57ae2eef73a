//! Scalar math used throughout the crate.
//!
//! All transcendental functions go through `libm` so results are identical
//! with and without the standard library.

/// Largest f64 strictly below 1.0.
pub const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Logistic sigmoid, clamped into the open interval (0, 1).
///
/// The two-branch form avoids overflow in exp for large |x|. Without the
/// clamp, saturated inputs round to exactly 0.0 or 1.0 in f64, which would
/// break the guarantee that downstream logs stay finite.
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}
