//! Special functions used by the moment kernels.
//!
//! Normal CDF/PDF are built on `erfc` so that both tails keep full relative precision.
//! The Dawson-like pair used by the LIF firing-rate kernels is
//!
//! ```text
//! g(x) = e^{x²} ∫_{-∞}^{x} e^{-u²} du          = (√π / 2) · erfcx(-x)
//! h(x) = e^{x²} ∫_{-∞}^{x} e^{-u²} g(u)² du
//! ```
//!
//! `g` is evaluated from `erfc` with an exactly-split `e^{x²}` and switches to its
//! asymptotic series far in the left tail. `h` is evaluated as
//! `∫_0^∞ e^{2xt - t²} g(x - t)² dt` by adaptive quadrature, again with an asymptotic
//! series far in the left tail.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::Result;
use crate::quadrature::{integrate, Tolerance};

const SQRT_PI: f64 = 1.772_453_850_905_516;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point `g` is summed from its asymptotic expansion.
const G_ASYMPTOTIC_BELOW: f64 = -20.0;
/// Below this point `h` is summed from its asymptotic expansion.
const H_ASYMPTOTIC_BELOW: f64 = -12.0;
const ASYMPTOTIC_TERMS: usize = 16;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `e^{x²}` with the rounding error of `x²` carried into the result.
fn exp_square(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * (1.0 + lo)
}

/// Coefficients `a_n` of `g(x) ~ Σ a_n x^{-(2n+1)}` as `x → -∞`.
fn g_series() -> [f64; ASYMPTOTIC_TERMS] {
    let mut a = [0.0; ASYMPTOTIC_TERMS];
    a[0] = -0.5;
    for n in 1..ASYMPTOTIC_TERMS {
        // a_n = -a_{n-1} (2n-1) / 2
        a[n] = -a[n - 1] * (2 * n - 1) as f64 / 2.0;
    }
    a
}

/// Coefficients `c_k` of `h(x) ~ Σ c_k x^{-(2k+3)}` as `x → -∞`, from `h' = 2xh + g²`.
fn h_series() -> [f64; ASYMPTOTIC_TERMS] {
    let a = g_series();
    let mut c = [0.0; ASYMPTOTIC_TERMS];
    for k in 0..ASYMPTOTIC_TERMS {
        let s_k: f64 = (0..=k).map(|i| a[i] * a[k - i]).sum();
        let prev = if k == 0 { 0.0 } else { (2 * k + 1) as f64 * c[k - 1] };
        c[k] = -(prev + s_k) / 2.0;
    }
    c
}

fn sum_inverse_odd_powers(coeffs: &[f64], x: f64, first_power: i32) -> f64 {
    let inv2 = 1.0 / (x * x);
    // Horner in 1/x², smallest terms first.
    let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * inv2 + c);
    poly * x.powi(-first_power)
}

/// `g(x) = e^{x²} ∫_{-∞}^{x} e^{-u²} du`. Overflows to `+∞` for `x ≳ 26.6`.
pub fn dawson_g(x: f64) -> f64 {
    if x < G_ASYMPTOTIC_BELOW {
        sum_inverse_odd_powers(&g_series(), x, 1)
    } else {
        0.5 * SQRT_PI * exp_square(x) * erfc(-x)
    }
}

/// `h(x) = e^{x²} ∫_{-∞}^{x} e^{-u²} g(u)² du`. Overflows to `+∞` for `x ≳ 18.8`.
pub fn dawson_h(x: f64) -> f64 {
    if x < H_ASYMPTOTIC_BELOW {
        return sum_inverse_odd_powers(&h_series(), x, 3);
    }
    if x > 18.8 {
        return f64::INFINITY;
    }
    // Substituting u = x - t gives a smooth integrand with at most Gaussian growth.
    let upper = x.max(0.0) + 12.0;
    let tol = Tolerance { abs: 0.0, rel: 1e-14, max_intervals: 500 };
    let integrand = |t: f64| {
        let g = dawson_g(x - t);
        (t * (2.0 * x - t)).exp() * g * g
    };
    match integrate(integrand, 0.0, upper, tol) {
        Ok(r) => r.value,
        Err(_) => f64::NAN,
    }
}

/// `∫_a^b g(x) dx`.
pub fn dawson_g_integral(a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a > b {
        return dawson_g_integral(b, a, tol).map(|v| -v);
    }
    integrate(dawson_g, a, b, tol).map(|r| r.value)
}

/// `∫_a^b h(x) dx`.
pub fn dawson_h_integral(a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a > b {
        return dawson_h_integral(b, a, tol).map(|v| -v);
    }
    integrate(dawson_h, a, b, tol).map(|r| r.value)
}

/// `√(2π)`, handy for the kernels.
pub const SQRT_2PI: f64 = SQRT_2 * SQRT_PI;
