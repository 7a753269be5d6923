//! Float entry points that resolve with or without std (libm fallback).

use num_traits::Float;

#[inline]
pub fn exp(x: f64) -> f64 {
    Float::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    Float::ln(x)
}

#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    Float::powf(x, y)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    Float::powi(x, n)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    Float::abs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    Float::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    Float::ceil(x)
}

#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    Float::sin_cos(x)
}

#[inline]
pub fn exp_m1(x: f64) -> f64 {
    Float::exp_m1(x)
}

/// p^e as f64 for integer exponents of moderate size.
#[inline]
pub fn p_pow(p: u32, e: i64) -> f64 {
    powi(p as f64, e as i32)
}

/// p^(e*s) = exp(e*s*ln p), stable for fractional s and large |e|.
#[inline]
pub fn p_pow_f(p: u32, e: f64) -> f64 {
    exp(e * ln(p as f64))
}
