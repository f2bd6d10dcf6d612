//! Scalar activation functions and their derivatives up to third order.
//!
//! Third derivatives are required because losses may contain component
//! Laplacians of the network; backpropagating through those touches one
//! derivative order above what the forward pass evaluates.

use serde::{Deserialize, Serialize};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Supported activations. Both are smooth, so second-order spatial
/// derivatives of the network are well defined everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `gelu(x) = x * Phi(x)` with `Phi` the exact standard normal CDF.
    Gelu,
    Tanh,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gelu" => Some(Activation::Gelu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        }
    }

    /// `order`-th derivative at `x`; `order = 0` is the activation itself.
    /// Supported orders are 0..=3.
    #[inline]
    pub fn eval(self, x: f64, order: u8) -> f64 {
        match self {
            Activation::Gelu => gelu(x, order),
            Activation::Tanh => tanh(x, order),
        }
    }
}

/// Standard normal CDF via erf.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2))
}

/// Standard normal PDF.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
fn gelu(x: f64, order: u8) -> f64 {
    match order {
        0 => x * normal_cdf(x),
        1 => normal_cdf(x) + x * normal_pdf(x),
        2 => (2.0 - x * x) * normal_pdf(x),
        3 => (x * x * x - 4.0 * x) * normal_pdf(x),
        _ => unreachable!("activation derivative order {order} not supported"),
    }
}

#[inline]
fn tanh(x: f64, order: u8) -> f64 {
    let t = x.tanh();
    let s = 1.0 - t * t; // sech^2
    match order {
        0 => t,
        1 => s,
        2 => -2.0 * t * s,
        3 => s * (6.0 * t * t - 2.0),
        _ => unreachable!("activation derivative order {order} not supported"),
    }
}
