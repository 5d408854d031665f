//! Elementwise proximal operators.
//!
//! The central one is the closed-form proximal map of `||x||_1 - alpha ||x||_2`,
//!
//! ```text
//! prox(y; alpha, beta) = argmin_x ||x||_1 - alpha ||x||_2 + 1/(2 beta) ||x - y||^2
//! ```
//!
//! which splits into three regimes depending on `||y||_inf`. The remaining
//! operators back the anisotropic, isotropic and `l_p` (0 < p < 1) baselines.

use crate::error::{Error, Result};

/// Parameters of the `l1 - alpha l2` proximal map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ProxParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("alpha = {alpha} outside [0, 1]")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta = {beta} must be positive")));
        }
        Ok(Self { alpha, beta })
    }
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed-form minimizer of `||x||_1 - alpha ||x||_2 + ||x - y||^2 / (2 beta)`.
///
/// Ties in the 1-sparse regime go to the first index of largest magnitude.
pub fn prox_l1_minus_alpha_l2<const N: usize>(y: [f64; N], params: ProxParams) -> [f64; N] {
    let ProxParams { alpha, beta } = params;
    let y_inf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = [0.0; N];

    if y_inf > beta {
        let mut xi = [0.0; N];
        for (k, v) in y.iter().enumerate() {
            xi[k] = sign(*v) * (v.abs() - beta).max(0.0);
        }
        let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = (xi_norm + alpha * beta) / xi_norm;
        for k in 0..N {
            x[k] = scale * xi[k];
        }
    } else if y_inf <= (1.0 - alpha) * beta {
        // zero; with alpha = 1 only y = 0 lands here
    } else {
        let i = y
            .iter()
            .position(|v| v.abs() == y_inf)
            .expect("max of a non-empty array");
        x[i] = (y[i].abs() + (alpha - 1.0) * beta) * sign(y[i]);
    }
    x
}

/// `sign(y) max(|y| - beta, 0)`.
#[inline]
pub fn prox_soft_threshold(y: f64, beta: f64) -> f64 {
    sign(y) * (y.abs() - beta).max(0.0)
}

/// Block soft-threshold `max(||y|| - beta, 0) y / ||y||`, zero at `y = 0`.
#[inline]
pub fn prox_isotropic_shrink(y: [f64; 2], beta: f64) -> [f64; 2] {
    let norm = y[0].hypot(y[1]);
    if norm <= beta || norm == 0.0 {
        return [0.0, 0.0];
    }
    let scale = (norm - beta) / norm;
    [scale * y[0], scale * y[1]]
}

/// `beta |x|^p + (x - y)^2 / 2`.
#[inline]
pub fn lp_objective(x: f64, y: f64, beta: f64, p: f64) -> f64 {
    beta * x.abs().powf(p) + 0.5 * (x - y) * (x - y)
}

/// Global minimizer of `beta |x|^p + (x - y)^2 / 2` for `0 < p < 1`.
///
/// On `x > 0` the stationarity map `g(x) = x + beta p x^(p-1)` is convex with
/// its minimum at `x_min = (beta p (1-p))^(1/(2-p))`; the local minimizer of
/// the objective is the root of `g(x) = |y|` on `[x_min, |y|]`, found by
/// bisection and then compared against `x = 0`.
pub fn prox_lp_scalar(y: f64, beta: f64, p: f64) -> f64 {
    debug_assert!(beta > 0.0 && p > 0.0 && p < 1.0);
    if y == 0.0 {
        return 0.0;
    }
    let target = y.abs();
    let g = |x: f64| x + beta * p * x.powf(p - 1.0);
    let x_min = (beta * p * (1.0 - p)).powf(1.0 / (2.0 - p));
    if x_min >= target || g(x_min) > target {
        return 0.0;
    }
    let (mut lo, mut hi) = (x_min, target);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidate = 0.5 * (lo + hi);
    if lp_objective(candidate, target, beta, p) < lp_objective(0.0, target, beta, p) {
        sign(y) * candidate
    } else {
        0.0
    }
}

/// Objective of the `l1 - alpha l2` proximal problem.
pub fn l1_minus_alpha_l2_objective(x: [f64; 2], y: [f64; 2], params: ProxParams) -> f64 {
    let l1 = x[0].abs() + x[1].abs();
    let l2 = x[0].hypot(x[1]);
    let d = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    l1 - params.alpha * l2 + d / (2.0 * params.beta)
}
