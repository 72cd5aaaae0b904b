//! Bessel functions of the first kind for non-negative integer and
//! half-integer orders.
//!
//! Only the orders reached by radial profiles in dimension `N <= 24` matter
//! here (`N/2`, `N/2 + 1`, `N/2 + 2`), so the evaluator is a plain power
//! series for moderate arguments and Miller's backward recurrence beyond.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Largest order accepted by [`bessel_j`].
pub const MAX_ORDER: f64 = 14.0;

/// Arguments up to this value use the power series.
pub const SERIES_LIMIT: f64 = 8.0;

fn check_order(nu: f64) -> Result<()> {
    let twice = 2.0 * nu;
    if !(0.0..=MAX_ORDER).contains(&nu) || (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::OutOfRange(format!(
            "Bessel order {nu} is not a half-integer in [0, {MAX_ORDER}]"
        )));
    }
    Ok(())
}

/// `Γ(x)` for `x` a positive multiple of 1/2.
pub fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    debug_assert!(twice >= 1, "gamma_half_integer needs x >= 1/2");
    let (mut value, mut arg) = if twice % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while arg < x - 0.25 {
        value *= arg;
        arg += 1.0;
    }
    value
}

/// The entire function `Σ_m (−z²/4)^m / (m! Γ(m+ν+1))`.
///
/// `J_ν(z) = (z/2)^ν · reduced_series(ν, z)`. Working with the reduced form
/// avoids the `r^{1-ν}` singularity of the radial profiles at the origin.
pub fn reduced_series(nu: f64, z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = 1.0 / gamma_half_integer(nu + 1.0);
    let mut sum = term;
    let mut m = 1.0;
    loop {
        term *= q / (m * (m + nu));
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() && m > 0.5 * z {
            break;
        }
        m += 1.0;
        if m > 500.0 {
            break;
        }
    }
    sum
}

/// `J_ν(x)` for `x >= 0` and `ν` a half-integer in `[0, MAX_ORDER]`.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("Bessel argument {x} is negative")));
    }
    check_order(nu)?;
    if x == 0.0 {
        return Ok(if nu == 0.0 { 1.0 } else { 0.0 });
    }
    if x <= SERIES_LIMIT {
        return Ok((0.5 * x).powf(nu) * reduced_series(nu, x));
    }
    Ok(backward_recurrence(nu, x))
}

/// Miller's algorithm. Integer orders are normalized by
/// `J_0 + 2 Σ J_2k = 1`, half-integer orders by the closed forms of
/// `J_{±1/2}`.
fn backward_recurrence(nu: f64, x: f64) -> f64 {
    const BIG: f64 = 1e250;
    let half = (nu - nu.floor()) > 0.25;
    let frac = if half { 0.5 } else { 0.0 };
    let target = nu.floor() as i64;
    let top = {
        let base = x.max(nu).ceil() as i64 + 40 + (4.0 * x.cbrt()).ceil() as i64;
        base + (base & 1)
    };
    let lowest: i64 = if half { -1 } else { 0 };

    let mut above = 0.0_f64; // order frac + k + 1
    let mut current = 1e-30_f64; // order frac + k
    let mut value = if top == target { current } else { 0.0 };
    let mut even_sum = if !half && top % 2 == 0 { current } else { 0.0 };
    let mut order_half = 0.0; // J_{1/2}
    let mut order_minus_half = 0.0; // J_{-1/2}

    let mut k = top;
    while k > lowest {
        let below = 2.0 * (frac + k as f64) / x * current - above;
        above = current;
        current = below;
        k -= 1;
        if k == target {
            value = current;
        }
        if !half && k % 2 == 0 {
            even_sum += if k == 0 { current } else { 2.0 * current };
        }
        if half && k == 0 {
            order_half = current;
        }
        if half && k == -1 {
            order_minus_half = current;
        }
        if current.abs() > BIG {
            current /= BIG;
            above /= BIG;
            value /= BIG;
            even_sum /= BIG;
            order_half /= BIG;
        }
    }

    if half {
        let amp = (2.0 / (PI * x)).sqrt();
        let (s, c) = x.sin_cos();
        if s.abs() >= c.abs() {
            value * (amp * s) / order_half
        } else {
            value * (amp * c) / order_minus_half
        }
    } else {
        value / even_sum
    }
}
