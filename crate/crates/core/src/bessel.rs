//! Bessel functions of the first kind, integer order.
//!
//! Power series for `|x| <= 8`, Miller's downward recurrence normalized by
//! `J_0 + 2 sum J_2k = 1` above. Supported envelope: `|x| <= 30`, order
//! `<= 20`, absolute error below `1e-12`.

use crate::error::AnalyticError;

pub const MAX_ORDER: u32 = 20;
pub const MAX_ARGUMENT: f64 = 30.0;

const SERIES_LIMIT: f64 = 8.0;

/// `J_order(x)`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64, AnalyticError> {
    if order > MAX_ORDER || !(x.abs() <= MAX_ARGUMENT) {
        return Err(AnalyticError::OutOfEnvelope {
            function: "bessel_j",
            detail: format!("order {order}, x {x}"),
        });
    }
    let value = if x.abs() <= SERIES_LIMIT { series(order, x.abs()) } else { miller(order, x.abs()) };
    Ok(if x < 0.0 && order % 2 == 1 { -value } else { value })
}

/// `J_order(x)` for signed integer order, `J_{-n} = (-1)^n J_n`.
pub fn bessel_j_signed(order: i32, x: f64) -> Result<f64, AnalyticError> {
    let value = bessel_j(order.unsigned_abs(), x)?;
    Ok(if order < 0 && order % 2 != 0 { -value } else { value })
}

/// `d/dx J_n(x) = (J_{n-1} - J_{n+1}) / 2`.
pub fn bessel_j_derivative(order: u32, x: f64) -> Result<f64, AnalyticError> {
    let lower = bessel_j_signed(order as i32 - 1, x)?;
    let upper = if order + 1 > MAX_ORDER { upper_tail(order + 1, x) } else { bessel_j(order + 1, x)? };
    Ok(0.5 * (lower - upper))
}

fn upper_tail(order: u32, x: f64) -> f64 {
    if x.abs() <= SERIES_LIMIT {
        series(order, x.abs()) * if x < 0.0 && order % 2 == 1 { -1.0 } else { 1.0 }
    } else {
        miller(order, x.abs())
    }
}

fn series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn miller(order: u32, x: f64) -> f64 {
    // Start well above both the order and the argument.
    let start = 2 * ((order.max(x.ceil() as u32) + 40) / 2 + 1);
    let two_over_x = 2.0 / x;
    let (mut next, mut current) = (0.0f64, 1e-30f64);
    let mut norm = 0.0;
    let mut wanted = 0.0;
    for k in (1..=start).rev() {
        let previous = k as f64 * two_over_x * current - next;
        next = current;
        current = previous;
        if current.abs() > 1e200 {
            current *= 1e-200;
            next *= 1e-200;
            norm *= 1e-200;
            wanted *= 1e-200;
        }
        // `current` now holds the unnormalized J_{k-1}.
        if k - 1 == order {
            wanted = current;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * current;
        }
    }
    norm += current;
    wanted / norm
}

/// Location of the first maximum of `J_order` on `x > 0`, found by bisection
/// on the derivative.
pub fn first_maximum(order: u32) -> Result<f64, AnalyticError> {
    if order == 0 {
        return Ok(0.0);
    }
    // The first maximum lies below order + 1.9 * order^(1/3) + 1.
    let mut lo = 1e-6;
    let mut hi = order as f64 + 2.0 * (order as f64).cbrt() + 1.0;
    debug_assert!(bessel_j_derivative(order, lo)? > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j_derivative(order, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
