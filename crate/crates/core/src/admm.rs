//! ADMM solver for the AITV-regularized smoothing model
//!
//! ```text
//! F(u) = lambda/2 ||f - A u||^2 + mu/2 ||grad u||^2 + ||grad u||_1 - alpha ||grad u||_{2,1}
//! ```
//!
//! split as `grad u = w` with dual variable `z` and an increasing penalty
//! `delta_{t+1} = sigma delta_t`. Each iteration performs an FFT solve for
//! `u`, a pixelwise proximal step for `w`, dual ascent on `z` and a penalty
//! update. Optional diagnostics evaluate the augmented Lagrangian and the
//! per-iteration descent inequality
//!
//! ```text
//! L_{t+1} - L_t <= (sigma + 1) / (2 sigma^t delta_0) ||z_{t+1} - z_t||^2 - zeta/2 ||u_{t+1} - u_t||^2
//! ```
//!
//! where `zeta` is the smallest eigenvalue of `lambda A^T A + (mu + delta_0) grad^T grad`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_gradient, gradient_adjoint, GradientField, ImageGrid};
use crate::prox::{
    prox_isotropic_shrink, prox_l1_minus_alpha_l2, prox_lp_scalar, prox_soft_threshold, ProxParams,
};
use crate::spectral::{operator_symbol_with, BlurKernel, Fft2, FrequencySymbol, Operator, PeriodicConvolution};

/// Denominators of the FFT quotient below this value are treated as singular.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Allowed negative slack in the descent inequality.
pub const LEMMA4_SLACK_TOL: f64 = 1e-8;

/// Slack on the dual sup-norm bound `||z_t||_inf <= 2`.
pub const Z_INF_SLACK: f64 = 1e-10;

/// Relative residual allowed in the u-update normal equations.
pub const NORMAL_RESIDUAL_TOL: f64 = 1e-8;

/// The gradient-sparsity term of the smoothing model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Regularizer {
    /// `||grad u||_1 - alpha ||grad u||_{2,1}`
    Aitv,
    /// `||grad u||_1`
    AnisotropicTv,
    /// `||grad u||_{2,1}`
    IsotropicTv,
    /// `sum |dx u|^p + |dy u|^p` with `p` in {1/2, 2/3}
    Tvp { p: f64 },
}

impl Regularizer {
    pub fn value(&self, p: &GradientField, alpha: f64) -> f64 {
        match *self {
            Self::Aitv => p.l1_norm() - alpha * p.l21_norm(),
            Self::AnisotropicTv => p.l1_norm(),
            Self::IsotropicTv => p.l21_norm(),
            Self::Tvp { p: exp } => p
                .x
                .as_slice()
                .iter()
                .chain(p.y.as_slice())
                .map(|v| v.abs().powf(exp))
                .sum(),
        }
    }

    /// Minimizer of `r(x) + ||x - y||^2 / (2 beta)` for one pixel.
    #[inline]
    pub fn prox(&self, y: [f64; 2], alpha: f64, beta: f64) -> [f64; 2] {
        match *self {
            Self::Aitv => prox_l1_minus_alpha_l2(y, ProxParams { alpha, beta }),
            Self::AnisotropicTv => [prox_soft_threshold(y[0], beta), prox_soft_threshold(y[1], beta)],
            Self::IsotropicTv => prox_isotropic_shrink(y, beta),
            Self::Tvp { p } => [prox_lp_scalar(y[0], beta, p), prox_lp_scalar(y[1], beta, p)],
        }
    }

    /// Whether every subgradient has sup-norm at most 2, which bounds the
    /// dual iterates. False for `l_p`, whose subgradients blow up near zero.
    pub fn has_bounded_dual(&self) -> bool {
        !matches!(self, Self::Tvp { .. })
    }
}

/// Every scalar knob of the model and of the ADMM iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fidelity weight.
    pub lambda: f64,
    /// Weight of the quadratic smoothing term.
    pub mu: f64,
    /// AITV weight in `[0, 1]`.
    pub alpha: f64,
    /// Initial penalty.
    pub delta0: f64,
    /// Penalty multiplier, at least 1.
    pub sigma: f64,
    /// Relative-change stopping tolerance.
    pub epsilon: f64,
    pub max_iters: usize,
    pub regularizer: Regularizer,
}

impl SolverConfig {
    /// Model weights with the remaining knobs at their usual defaults:
    /// `alpha = 0.6`, `delta0 = 1`, `sigma = 1.25`, `epsilon = 1e-4`, 300 iterations.
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self {
            lambda,
            mu,
            alpha: 0.6,
            delta0: 1.0,
            sigma: 1.25,
            epsilon: 1e-4,
            max_iters: 300,
            regularizer: Regularizer::Aitv,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_penalty(mut self, delta0: f64, sigma: f64) -> Self {
        self.delta0 = delta0;
        self.sigma = sigma;
        self
    }

    pub fn with_stopping(mut self, epsilon: f64, max_iters: usize) -> Self {
        self.epsilon = epsilon;
        self.max_iters = max_iters;
        self
    }

    pub fn with_regularizer(mut self, regularizer: Regularizer) -> Self {
        self.regularizer = regularizer;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must be positive and finite")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("delta0", self.delta0)?;
        positive("epsilon", self.epsilon)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma >= 1.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma = {} must be >= 1", self.sigma)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if let Regularizer::Tvp { p } = self.regularizer {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!("TVp exponent p = {p} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// `delta_t = delta0 sigma^t`.
    pub fn delta_at(&self, t: usize) -> f64 {
        self.delta0 * self.sigma.powi(t as i32)
    }
}

/// Primal, split and dual iterates with the current penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub u: ImageGrid,
    pub w: GradientField,
    pub z: GradientField,
    pub delta: f64,
    pub iter: usize,
}

impl AdmmState {
    /// `u = f`, `w = grad f`, `z = 0`: feasible, so the first Lagrangian is `F(f)`.
    pub fn initial(f: &ImageGrid, cfg: &SolverConfig) -> Self {
        let (m, n) = f.shape();
        Self {
            u: f.clone(),
            w: forward_gradient(f),
            z: GradientField::zeros(m, n),
            delta: cfg.delta0,
            iter: 0,
        }
    }
}

/// Per-iteration record. Fields wrapped in `Option` are filled only when the
/// callback asks for full diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateDiagnostics {
    /// Index `t + 1` of the iterate this record describes.
    pub iter: usize,
    /// Penalty `delta_t` used to produce this iterate.
    pub delta: f64,
    /// `||u_{t+1} - u_t|| / ||u_{t+1}||`, absolute when `u_{t+1} = 0`.
    pub rel_change: f64,
    pub u_change: f64,
    pub z_change: f64,
    /// `delta_t ||w_{t+1} - w_t||`
    pub scaled_w_change: f64,
    pub z_inf_norm: f64,
    pub z_l2_norm: f64,
    /// `||grad u_{t+1} - w_{t+1}||`
    pub primal_residual: f64,
    pub energy: Option<f64>,
    /// `L_{delta_{t+1}}(u_{t+1}, w_{t+1}, z_{t+1})`
    pub lagrangian: Option<f64>,
    pub lemma4_slack: Option<f64>,
    /// Relative residual of the u-update normal equations.
    pub normal_residual: Option<f64>,
}

/// Hook invoked after every ADMM iteration.
pub trait IterationCallback {
    /// Request Lagrangian, energy, descent-slack and residual evaluation.
    fn wants_diagnostics(&self) -> bool {
        false
    }

    fn on_iteration(&mut self, _state: &AdmmState, _diag: &IterateDiagnostics) {}
}

impl IterationCallback for () {}

/// Callback that only switches full diagnostics on.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullDiagnostics;

impl IterationCallback for FullDiagnostics {
    fn wants_diagnostics(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug)]
pub struct AdmmOutput {
    pub u: ImageGrid,
    pub state: AdmmState,
    pub trace: Vec<IterateDiagnostics>,
    pub iterations: usize,
    pub converged: bool,
    /// `L_{delta_0}(u_0, w_0, z_0)`, when diagnostics were on.
    pub initial_lagrangian: Option<f64>,
    pub zeta: Option<f64>,
}

impl AdmmOutput {
    pub fn final_energy(&self) -> Option<f64> {
        self.trace.last().and_then(|d| d.energy)
    }
}

/// Fidelity and model terms bound to one observed image.
#[derive(Clone, Debug)]
pub struct Model {
    f: ImageGrid,
    blur: PeriodicConvolution,
    cfg: SolverConfig,
}

impl Model {
    pub fn new(f: &ImageGrid, kernel: &BlurKernel, cfg: &SolverConfig) -> Result<Self> {
        Ok(Self {
            f: f.clone(),
            blur: PeriodicConvolution::new(kernel, f.rows(), f.cols())?,
            cfg: *cfg,
        })
    }

    fn with_fft(f: &ImageGrid, kernel: &BlurKernel, cfg: &SolverConfig, fft: Fft2) -> Result<Self> {
        Ok(Self {
            f: f.clone(),
            blur: PeriodicConvolution::with_fft(kernel, fft)?,
            cfg: *cfg,
        })
    }

    fn fidelity(&self, u: &ImageGrid) -> f64 {
        let au = self.blur.apply(u);
        0.5 * self.cfg.lambda * self.f.zip_map(&au, |a, b| a - b).norm_sq()
    }

    pub fn energy(&self, u: &ImageGrid) -> Result<f64> {
        self.f.check_same_shape(u)?;
        let g = forward_gradient(u);
        Ok(self.fidelity(u)
            + 0.5 * self.cfg.mu * g.norm_sq()
            + self.cfg.regularizer.value(&g, self.cfg.alpha))
    }

    /// Inner-product form:
    /// `fid + mu/2 ||grad u||^2 + R(w) + <z, grad u - w> + delta/2 ||grad u - w||^2`.
    pub fn lagrangian(&self, state: &AdmmState) -> Result<f64> {
        self.f.check_same_shape(&state.u)?;
        let g = forward_gradient(&state.u);
        let r = g.sub(&state.w);
        Ok(self.fidelity(&state.u)
            + 0.5 * self.cfg.mu * g.norm_sq()
            + self.cfg.regularizer.value(&state.w, self.cfg.alpha)
            + state.z.dot(&r)
            + 0.5 * state.delta * r.norm_sq())
    }

    /// Completed-square form:
    /// `fid + mu/2 ||grad u||^2 + R(w) + delta/2 ||grad u - w + z/delta||^2 - ||z||^2 / (2 delta)`.
    pub fn lagrangian_completed_square(&self, state: &AdmmState) -> Result<f64> {
        self.f.check_same_shape(&state.u)?;
        let g = forward_gradient(&state.u);
        let d = state.delta;
        let shifted = GradientField {
            x: ImageGrid::from_fn(g.x.rows(), g.x.cols(), |i, j| {
                g.x.get(i, j) - state.w.x.get(i, j) + state.z.x.get(i, j) / d
            }),
            y: ImageGrid::from_fn(g.y.rows(), g.y.cols(), |i, j| {
                g.y.get(i, j) - state.w.y.get(i, j) + state.z.y.get(i, j) / d
            }),
        };
        Ok(self.fidelity(&state.u)
            + 0.5 * self.cfg.mu * g.norm_sq()
            + self.cfg.regularizer.value(&state.w, self.cfg.alpha)
            + 0.5 * d * shifted.norm_sq()
            - state.z.norm_sq() / (2.0 * d))
    }

    /// `||L u - b|| / ||b||` for `L = lambda A^T A + (mu + delta) grad^T grad`
    /// and `b = lambda A^T f + grad^T (delta w - z)`, evaluated spatially.
    pub fn normal_residual(&self, u: &ImageGrid, w: &GradientField, z: &GradientField, delta: f64) -> f64 {
        let lambda = self.cfg.lambda;
        let ata_u = self.blur.apply_adjoint(&self.blur.apply(u));
        let gtg_u = gradient_adjoint(&forward_gradient(u));
        let lhs = ata_u.zip_map(&gtg_u, |a, g| lambda * a + (self.cfg.mu + delta) * g);
        let at_f = self.blur.apply_adjoint(&self.f);
        let target = GradientField {
            x: w.x.zip_map(&z.x, |wv, zv| delta * wv - zv),
            y: w.y.zip_map(&z.y, |wv, zv| delta * wv - zv),
        };
        let rhs = at_f.zip_map(&gradient_adjoint(&target), |a, g| lambda * a + g);
        let res = lhs.distance(&rhs);
        let scale = rhs.norm();
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }
}

/// Exact evaluation of `F(u)`.
pub fn energy(u: &ImageGrid, f: &ImageGrid, kernel: &BlurKernel, cfg: &SolverConfig) -> Result<f64> {
    Model::new(f, kernel, cfg)?.energy(u)
}

/// `L_delta(u, w, z)` at the state's penalty.
pub fn augmented_lagrangian(
    state: &AdmmState,
    f: &ImageGrid,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
) -> Result<f64> {
    Model::new(f, kernel, cfg)?.lagrangian(state)
}

/// Precomputed symbols for the FFT u-update:
///
/// ```text
/// u = F^-1[ (lambda conj(F A) F f + delta conj(F grad) . F(w - z/delta))
///           / (lambda |F A|^2 - (mu + delta) F Delta) ]
/// ```
#[derive(Clone, Debug)]
pub struct FourierSolver {
    fft: Fft2,
    grad_x: FrequencySymbol,
    grad_y: FrequencySymbol,
    blur_power: Vec<f64>,
    laplacian: Vec<f64>,
    data_term: Vec<Complex64>,
    lambda: f64,
    mu: f64,
}

impl FourierSolver {
    pub fn new(f: &ImageGrid, kernel: &BlurKernel, cfg: &SolverConfig) -> Result<Self> {
        Self::with_fft(f, kernel, cfg, Fft2::new(f.rows(), f.cols()))
    }

    fn with_fft(f: &ImageGrid, kernel: &BlurKernel, cfg: &SolverConfig, fft: Fft2) -> Result<Self> {
        let blur = PeriodicConvolution::with_fft(kernel, fft.clone())?;
        let a = blur.symbol();
        let grad_x = operator_symbol_with(Operator::GradX, &fft)?;
        let grad_y = operator_symbol_with(Operator::GradY, &fft)?;
        let laplacian = operator_symbol_with(Operator::Laplacian, &fft)?
            .values()
            .iter()
            .map(|c| c.re)
            .collect();
        let f_hat = fft.forward(f);
        let data_term = f_hat
            .iter()
            .zip(a.values())
            .map(|(fv, av)| cfg.lambda * av.conj() * fv)
            .collect();
        Ok(Self {
            fft,
            grad_x,
            grad_y,
            blur_power: a.power(),
            laplacian,
            data_term,
            lambda: cfg.lambda,
            mu: cfg.mu,
        })
    }

    /// Smallest denominator entry for penalty `delta`, with its frequency.
    pub fn min_denominator(&self, delta: f64) -> (f64, (usize, usize)) {
        let cols = self.fft.shape().1;
        let mut best = (f64::INFINITY, (0, 0));
        for (k, (p, l)) in self.blur_power.iter().zip(&self.laplacian).enumerate() {
            let d = self.lambda * p - (self.mu + delta) * l;
            if d < best.0 {
                best = (d, (k / cols, k % cols));
            }
        }
        best
    }

    pub fn solve(&self, w: &GradientField, z: &GradientField, delta: f64) -> Result<ImageGrid> {
        let (min_den, frequency) = self.min_denominator(delta);
        if !(min_den >= SINGULAR_DENOMINATOR) {
            return Err(Error::SingularOperator {
                min_denominator: min_den,
                frequency,
            });
        }
        let px = w.x.zip_map(&z.x, |wv, zv| wv - zv / delta);
        let py = w.y.zip_map(&z.y, |wv, zv| wv - zv / delta);
        let px_hat = self.fft.forward(&px);
        let py_hat = self.fft.forward(&py);
        let mut buf = Vec::with_capacity(px_hat.len());
        for k in 0..px_hat.len() {
            let num = self.data_term[k]
                + delta
                    * (self.grad_x.values()[k].conj() * px_hat[k]
                        + self.grad_y.values()[k].conj() * py_hat[k]);
            let den = self.lambda * self.blur_power[k] - (self.mu + delta) * self.laplacian[k];
            buf.push(num / den);
        }
        Ok(self.fft.inverse_real(buf))
    }
}

/// One u-update from scratch.
pub fn u_update(
    w: &GradientField,
    z: &GradientField,
    f: &ImageGrid,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    delta: f64,
) -> Result<ImageGrid> {
    FourierSolver::new(f, kernel, cfg)?.solve(w, z, delta)
}

/// Pixelwise `w = prox(grad u + z/delta; alpha, 1/delta)`.
pub fn w_update(u: &ImageGrid, z: &GradientField, cfg: &SolverConfig, delta: f64) -> GradientField {
    w_update_from_gradient(&forward_gradient(u), z, cfg, delta)
}

pub fn w_update_from_gradient(
    grad: &GradientField,
    z: &GradientField,
    cfg: &SolverConfig,
    delta: f64,
) -> GradientField {
    let (m, n) = grad.shape();
    let beta = 1.0 / delta;
    let mut wx = vec![0.0; m * n];
    let mut wy = vec![0.0; m * n];
    for k in 0..m * n {
        let (gx, gy) = grad.at(k);
        let (zx, zy) = z.at(k);
        let out = cfg
            .regularizer
            .prox([gx + zx / delta, gy + zy / delta], cfg.alpha, beta);
        wx[k] = out[0];
        wy[k] = out[1];
    }
    GradientField {
        x: ImageGrid::from_raw(m, n, wx),
        y: ImageGrid::from_raw(m, n, wy),
    }
}

/// `zeta = min_freq lambda |F A|^2 + (mu + delta0)(|F dx|^2 + |F dy|^2)`.
pub fn zeta_smallest_eigenvalue(kernel: &BlurKernel, cfg: &SolverConfig, rows: usize, cols: usize) -> Result<f64> {
    let fft = Fft2::new(rows, cols);
    zeta_with(kernel, cfg, &fft)
}

fn zeta_with(kernel: &BlurKernel, cfg: &SolverConfig, fft: &Fft2) -> Result<f64> {
    let a = PeriodicConvolution::with_fft(kernel, fft.clone())?.symbol();
    let gx = operator_symbol_with(Operator::GradX, fft)?;
    let gy = operator_symbol_with(Operator::GradY, fft)?;
    let shift = cfg.mu + cfg.delta0;
    Ok(a
        .values()
        .iter()
        .zip(gx.values().iter().zip(gy.values()))
        .map(|(av, (x, y))| cfg.lambda * av.norm_sqr() + shift * (x.norm_sqr() + y.norm_sqr()))
        .fold(f64::INFINITY, f64::min))
}

/// Runs the ADMM iteration from `u = f, w = grad f, z = 0` until the relative
/// change drops to `epsilon` or `max_iters` is reached.
pub fn admm_solve(
    f: &ImageGrid,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    callback: &mut impl IterationCallback,
) -> Result<AdmmOutput> {
    cfg.validate()?;
    if !f.is_finite() {
        return Err(Error::NonFinite("input image"));
    }
    let fft = Fft2::new(f.rows(), f.cols());
    let solver = FourierSolver::with_fft(f, kernel, cfg, fft.clone())?;
    let diagnostics = callback.wants_diagnostics();
    let model = if diagnostics {
        Some(Model::with_fft(f, kernel, cfg, fft.clone())?)
    } else {
        None
    };
    let zeta = if diagnostics {
        Some(zeta_with(kernel, cfg, &fft)?)
    } else {
        None
    };

    let mut state = AdmmState::initial(f, cfg);
    let initial_lagrangian = match &model {
        Some(m) => Some(m.lagrangian(&state)?),
        None => None,
    };
    let mut prev_lagrangian = initial_lagrangian;
    let mut trace = Vec::new();
    let mut converged = false;

    for t in 0..cfg.max_iters {
        let delta = state.delta;
        let u_next = solver.solve(&state.w, &state.z, delta)?;
        let grad = forward_gradient(&u_next);
        let w_next = w_update_from_gradient(&grad, &state.z, cfg, delta);
        let residual = grad.sub(&w_next);
        let z_next = GradientField {
            x: state.z.x.zip_map(&residual.x, |zv, r| zv + delta * r),
            y: state.z.y.zip_map(&residual.y, |zv, r| zv + delta * r),
        };
        if !(u_next.is_finite() && w_next.is_finite() && z_next.is_finite()) {
            return Err(Error::Divergence { iteration: t + 1 });
        }

        let u_change = u_next.distance(&state.u);
        let u_norm = u_next.norm();
        let rel_change = if u_norm > 0.0 { u_change / u_norm } else { u_change };
        let z_change = z_next.distance(&state.z);
        let scaled_w_change = delta * w_next.distance(&state.w);
        let normal_residual = model
            .as_ref()
            .map(|m| m.normal_residual(&u_next, &state.w, &state.z, delta));

        let next = AdmmState {
            u: u_next,
            w: w_next,
            z: z_next,
            delta: cfg.delta_at(t + 1),
            iter: t + 1,
        };

        let mut diag = IterateDiagnostics {
            iter: t + 1,
            delta,
            rel_change,
            u_change,
            z_change,
            scaled_w_change,
            z_inf_norm: next.z.max_abs(),
            z_l2_norm: next.z.l2_norm(),
            primal_residual: residual.norm_sq().sqrt(),
            energy: None,
            lagrangian: None,
            lemma4_slack: None,
            normal_residual,
        };
        if let Some(m) = &model {
            let lag = m.lagrangian(&next)?;
            diag.energy = Some(m.energy(&next.u)?);
            diag.lagrangian = Some(lag);
            if let (Some(prev), Some(zeta)) = (prev_lagrangian, zeta) {
                diag.lemma4_slack = Some(lemma4_slack(cfg, t, z_change, u_change, zeta, lag - prev));
            }
            prev_lagrangian = Some(lag);
        }

        state = next;
        callback.on_iteration(&state, &diag);
        trace.push(diag);
        if rel_change <= cfg.epsilon {
            converged = true;
            break;
        }
    }

    Ok(AdmmOutput {
        u: state.u.clone(),
        iterations: state.iter,
        state,
        trace,
        converged,
        initial_lagrangian,
        zeta,
    })
}

fn lemma4_slack(cfg: &SolverConfig, t: usize, z_change: f64, u_change: f64, zeta: f64, lagrangian_step: f64) -> f64 {
    let coeff = (cfg.sigma + 1.0) / (2.0 * cfg.sigma.powi(t as i32) * cfg.delta0);
    coeff * z_change * z_change - 0.5 * zeta * u_change * u_change - lagrangian_step
}

/// Descent-inequality slack for every iteration of a diagnosed run:
/// `(sigma+1)/(2 sigma^t delta0) ||dz||^2 - zeta/2 ||du||^2 - (L_{t+1} - L_t)`.
pub fn check_lemma4(
    trace: &[IterateDiagnostics],
    initial_lagrangian: Option<f64>,
    zeta: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut prev = initial_lagrangian.ok_or(Error::MissingDiagnostics("initial Lagrangian"))?;
    let mut slacks = Vec::with_capacity(trace.len());
    for (t, d) in trace.iter().enumerate() {
        let lag = d.lagrangian.ok_or(Error::MissingDiagnostics("Lagrangian"))?;
        slacks.push(lemma4_slack(cfg, t, d.z_change, d.u_change, zeta, lag - prev));
        prev = lag;
    }
    Ok(slacks)
}

/// A violated convergence invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub iteration: usize,
    pub value: f64,
    pub bound: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} violated at iteration {}: value {:e}, bound {:e}",
            self.invariant, self.iteration, self.value, self.bound
        )
    }
}

/// Runtime checks of the convergence theory on a diagnosed run: descent
/// slack, dual bounds, u-update exactness and the primal-residual decay.
pub fn verify_invariants(output: &AdmmOutput, cfg: &SolverConfig) -> Result<Vec<Violation>> {
    let zeta = output.zeta.ok_or(Error::MissingDiagnostics("zeta"))?;
    let (m, n) = output.u.shape();
    let z_l2_bound = 2.0 * (2.0 * (m * n) as f64).sqrt();
    let slacks = check_lemma4(&output.trace, output.initial_lagrangian, zeta, cfg)?;
    let mut out = Vec::new();
    for (d, slack) in output.trace.iter().zip(slacks) {
        if slack < -LEMMA4_SLACK_TOL {
            out.push(Violation {
                invariant: "descent inequality",
                iteration: d.iter,
                value: slack,
                bound: -LEMMA4_SLACK_TOL,
            });
        }
        let res = d
            .normal_residual
            .ok_or(Error::MissingDiagnostics("normal-equation residual"))?;
        if !(res <= NORMAL_RESIDUAL_TOL) {
            out.push(Violation {
                invariant: "u-update normal equations",
                iteration: d.iter,
                value: res,
                bound: NORMAL_RESIDUAL_TOL,
            });
        }
        if cfg.regularizer.has_bounded_dual() {
            if d.z_inf_norm > 2.0 + Z_INF_SLACK {
                out.push(Violation {
                    invariant: "dual sup-norm bound",
                    iteration: d.iter,
                    value: d.z_inf_norm,
                    bound: 2.0 + Z_INF_SLACK,
                });
            }
            if d.z_l2_norm > z_l2_bound * (1.0 + 1e-12) {
                out.push(Violation {
                    invariant: "dual l2 bound",
                    iteration: d.iter,
                    value: d.z_l2_norm,
                    bound: z_l2_bound,
                });
            }
            let primal_bound = 2.0 * z_l2_bound / d.delta;
            if d.primal_residual > primal_bound * (1.0 + 1e-12) {
                out.push(Violation {
                    invariant: "primal residual bound",
                    iteration: d.iter,
                    value: d.primal_residual,
                    bound: primal_bound,
                });
            }
        }
    }
    Ok(out)
}
