//! Shared helpers for integration tests: the finite-difference protocol and
//! relative-error convention used by the derivative checks.

#![allow(dead_code)]

/// Relative error with a floored denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central finite difference with step `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub const FD_H: f64 = 1e-4;
