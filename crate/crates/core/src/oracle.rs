//! Brute-force reference implementations used to verify the fast paths.
//!
//! Nothing here shares code with the operators it checks: prox results are
//! compared against exhaustive grid search over the raw objective, FFT solves
//! against dense matrices assembled from the pixel-level difference formulas,
//! and the IIH channel against a literal triple loop.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{GradientField, ImageGrid};
use crate::spectral::BlurKernel;

/// Objectives whose minimizers the prox module computes in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxObjective {
    /// `||x||_1 - alpha ||x||_2 + ||x - y||^2 / (2 beta)`
    L1MinusAlphaL2 { alpha: f64, beta: f64 },
    /// `beta ||x||_1 + ||x - y||^2 / 2`
    L1 { beta: f64 },
    /// `beta ||x||_2 + ||x - y||^2 / 2`
    Isotropic { beta: f64 },
    /// `beta (|x_1|^p + |x_2|^p) + ||x - y||^2 / 2`
    Lp { beta: f64, p: f64 },
}

impl ProxObjective {
    pub fn value(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let d = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        match *self {
            Self::L1MinusAlphaL2 { alpha, beta } => {
                x[0].abs() + x[1].abs() - alpha * (x[0] * x[0] + x[1] * x[1]).sqrt()
                    + d / (2.0 * beta)
            }
            Self::L1 { beta } => beta * (x[0].abs() + x[1].abs()) + 0.5 * d,
            Self::Isotropic { beta } => beta * (x[0] * x[0] + x[1] * x[1]).sqrt() + 0.5 * d,
            Self::Lp { beta, p } => beta * (x[0].abs().powf(p) + x[1].abs().powf(p)) + 0.5 * d,
        }
    }

    /// One-dimensional restriction (second coordinate fixed at zero).
    pub fn scalar_value(&self, t: f64, y: f64) -> f64 {
        self.value([t, 0.0], [y, 0.0])
    }
}

/// Minimum of `f` over the uniform grid `center + [-half_width, half_width]^2`
/// with `n` points per axis.
pub fn grid_minimize_2d(
    f: impl Fn([f64; 2]) -> f64,
    center: [f64; 2],
    half_width: f64,
    n: usize,
) -> ([f64; 2], f64) {
    assert!(n >= 2);
    let h = 2.0 * half_width / (n - 1) as f64;
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for a in 0..n {
        let x0 = center[0] - half_width + a as f64 * h;
        for b in 0..n {
            let x1 = center[1] - half_width + b as f64 * h;
            let v = f([x0, x1]);
            if v < best.1 {
                best = ([x0, x1], v);
            }
        }
    }
    best
}

/// Coarse grid search followed by zooming in on every coarse local minimum.
///
/// Refining all local minima, not just the best coarse point, keeps the
/// search from locking onto the wrong basin when two basins have nearly equal
/// values at coarse resolution.
pub fn refined_minimize_2d(
    f: impl Fn([f64; 2]) -> f64,
    half_width: f64,
    n: usize,
    levels: usize,
) -> ([f64; 2], f64) {
    let h = 2.0 * half_width / (n - 1) as f64;
    let coord = |k: usize| -half_width + k as f64 * h;
    let values: Vec<f64> = (0..n * n).map(|k| f([coord(k / n), coord(k % n)])).collect();
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for a in 0..n {
        for b in 0..n {
            let v = values[a * n + b];
            let mut is_local_min = true;
            for (da, db) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)] {
                let (na, nb) = (a as i64 + da, b as i64 + db);
                if na < 0 || nb < 0 || na >= n as i64 || nb >= n as i64 {
                    continue;
                }
                if values[na as usize * n + nb as usize] < v {
                    is_local_min = false;
                    break;
                }
            }
            if !is_local_min {
                continue;
            }
            let mut center = [coord(a), coord(b)];
            let mut width = h;
            let mut local = (center, v);
            for _ in 0..levels {
                local = grid_minimize_2d(&f, center, width, 21);
                center = local.0;
                width /= 8.0;
            }
            if local.1 < best.1 {
                best = local;
            }
        }
    }
    best
}

/// Exhaustive grid minimizer of a scalar function on `[-half_width, half_width]`.
pub fn grid_minimize_1d(f: impl Fn(f64) -> f64, half_width: f64, step: f64) -> (f64, f64) {
    let n = (2.0 * half_width / step).round() as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=n {
        let t = -half_width + k as f64 * step;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Grid-search prox: the minimizer of `objective(., y)` over a box around `y`.
pub fn prox_oracle(y: [f64; 2], objective: ProxObjective, half_width: f64, n: usize) -> ([f64; 2], f64) {
    refined_minimize_2d(|x| objective.value(x, y), half_width, n, 6)
}

fn pixel_index(i: usize, j: usize, cols: usize) -> usize {
    i * cols + j
}

/// Dense horizontal and vertical difference matrices built entry by entry
/// from the periodic forward-difference definition.
pub fn dense_gradient(rows: usize, cols: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rows * cols;
    let mut gx = DMatrix::zeros(n, n);
    let mut gy = DMatrix::zeros(n, n);
    for i in 0..rows {
        for j in 0..cols {
            let k = pixel_index(i, j, cols);
            let left = pixel_index(i, if j == 0 { cols - 1 } else { j - 1 }, cols);
            let up = pixel_index(if i == 0 { rows - 1 } else { i - 1 }, j, cols);
            gx[(k, k)] += 1.0;
            gx[(k, left)] -= 1.0;
            gy[(k, k)] += 1.0;
            gy[(k, up)] -= 1.0;
        }
    }
    (gx, gy)
}

/// Dense circulant matrix of a periodic convolution.
pub fn dense_convolution(kernel: &BlurKernel, rows: usize, cols: usize) -> DMatrix<f64> {
    let n = rows * cols;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..rows {
        for j in 0..cols {
            for (di, dj, w) in kernel.offsets() {
                let si = (i as isize - di).rem_euclid(rows as isize) as usize;
                let sj = (j as isize - dj).rem_euclid(cols as isize) as usize;
                a[(pixel_index(i, j, cols), pixel_index(si, sj, cols))] += w;
            }
        }
    }
    a
}

fn to_vector(u: &ImageGrid) -> DVector<f64> {
    DVector::from_column_slice(u.as_slice())
}

/// Solves `[lambda A^T A + (mu + delta) G^T G] u = lambda A^T f + G^T (delta w - z)`
/// by dense LU on the assembled system.
#[allow(clippy::too_many_arguments)]
pub fn dense_u_update(
    f: &ImageGrid,
    w: &GradientField,
    z: &GradientField,
    kernel: &BlurKernel,
    lambda: f64,
    mu: f64,
    delta: f64,
) -> Result<ImageGrid> {
    let (rows, cols) = f.shape();
    let (gx, gy) = dense_gradient(rows, cols);
    let a = dense_convolution(kernel, rows, cols);
    let lhs = a.transpose() * &a * lambda
        + (gx.transpose() * &gx + gy.transpose() * &gy) * (mu + delta);
    let rhs = a.transpose() * to_vector(f) * lambda
        + gx.transpose() * (to_vector(&w.x) * delta - to_vector(&z.x))
        + gy.transpose() * (to_vector(&w.y) * delta - to_vector(&z.y));
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularOperator {
            min_denominator: 0.0,
            frequency: (0, 0),
        })?;
    ImageGrid::new(rows, cols, sol.as_slice().to_vec())
}

/// Smallest eigenvalue of the dense `lambda A^T A + shift G^T G`.
pub fn dense_smallest_eigenvalue(
    kernel: &BlurKernel,
    lambda: f64,
    shift: f64,
    rows: usize,
    cols: usize,
) -> f64 {
    let (gx, gy) = dense_gradient(rows, cols);
    let a = dense_convolution(kernel, rows, cols);
    let m = a.transpose() * &a * lambda + (gx.transpose() * &gx + gy.transpose() * &gy) * shift;
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Literal evaluation of the IIH channel: patch means, the global indicator
/// and the per-patch exceedance fraction, each by explicit loops over the
/// border-truncated `(2r+1) x (2r+1)` patch. Works on `u - u[0][0]`, to which
/// the channel is invariant.
pub fn naive_iih(u: &ImageGrid, radius: usize) -> ImageGrid {
    let (m, n) = u.shape();
    let base = u.get(0, 0);
    let u = &u.map(|v| v - base);
    let patch = |i: usize, j: usize| {
        let r0 = i.saturating_sub(radius);
        let r1 = (i + radius).min(m - 1);
        let c0 = j.saturating_sub(radius);
        let c1 = (j + radius).min(n - 1);
        (r0, r1, c0, c1)
    };
    let mut means = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let (r0, r1, c0, c1) = patch(i, j);
            let mut s = 0.0;
            let mut count = 0usize;
            for a in r0..=r1 {
                for b in c0..=c1 {
                    s += u.get(a, b);
                    count += 1;
                }
            }
            means[i * n + j] = s / count as f64;
        }
    }
    let mut d = 0.0;
    for i in 0..m {
        for j in 0..n {
            let (r0, r1, c0, c1) = patch(i, j);
            let mut s = 0.0;
            let mut count = 0usize;
            for a in r0..=r1 {
                for b in c0..=c1 {
                    let diff = u.get(a, b) - means[i * n + j];
                    s += diff * diff;
                    count += 1;
                }
            }
            d += s / count as f64;
        }
    }
    d /= (m * n) as f64;
    ImageGrid::from_fn(m, n, |i, j| {
        let (r0, r1, c0, c1) = patch(i, j);
        let mut hits = 0usize;
        let mut count = 0usize;
        for a in r0..=r1 {
            for b in c0..=c1 {
                let diff = means[i * n + j] - u.get(a, b);
                if diff * diff >= d {
                    hits += 1;
                }
                count += 1;
            }
        }
        hits as f64 / count as f64
    })
}
