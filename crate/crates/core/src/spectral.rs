//! Blur kernels, 2-D FFT plans and the frequency symbols of periodic
//! convolution operators.
//!
//! Every operator here is block circulant under periodic boundaries, so it
//! is diagonalized by the 2-D DFT. A symbol is obtained by embedding the
//! operator's stencil into an M x N grid with its anchor at the origin and
//! transforming it.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// A point-spread function applied as circular convolution:
/// `(A u)[i][j] = sum_{a,b} taps[a][b] * u[i - (a - ar)][j - (b - ac)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
    anchor: (usize, usize),
}

impl BlurKernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>, anchor: (usize, usize)) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidKernel("empty kernel".into()));
        }
        if taps.len() != rows * cols {
            return Err(Error::InvalidKernel(format!(
                "{} taps for a {rows}x{cols} kernel",
                taps.len()
            )));
        }
        if anchor.0 >= rows || anchor.1 >= cols {
            return Err(Error::InvalidKernel(format!(
                "anchor {anchor:?} outside {rows}x{cols} kernel"
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidKernel("non-finite tap".into()));
        }
        Ok(Self {
            rows,
            cols,
            taps,
            anchor,
        })
    }

    /// Odd-sized kernel anchored at its center.
    pub fn centered(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "centered kernel needs odd dimensions, got {rows}x{cols}"
            )));
        }
        Self::new(rows, cols, taps, (rows / 2, cols / 2))
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
            anchor: (0, 0),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, a: usize, b: usize) -> f64 {
        self.taps[a * self.cols + b]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn is_identity(&self) -> bool {
        // Zero taps around a unit anchor still act as the identity.
        self.taps.iter().enumerate().all(|(k, &t)| {
            if k == self.anchor.0 * self.cols + self.anchor.1 {
                t == 1.0
            } else {
                t == 0.0
            }
        })
    }

    pub fn transposed(&self) -> Self {
        let mut taps = vec![0.0; self.taps.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                taps[b * self.rows + a] = self.tap(a, b);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            taps,
            anchor: (self.anchor.1, self.anchor.0),
        }
    }

    fn check_fits(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows > rows || self.cols > cols {
            return Err(Error::KernelTooLarge {
                kernel: (self.rows, self.cols),
                image: (rows, cols),
            });
        }
        Ok(())
    }

    /// Signed offsets `(di, dj)` and weights of every tap.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        (0..self.rows).flat_map(move |a| {
            (0..self.cols).map(move |b| {
                (
                    a as isize - self.anchor.0 as isize,
                    b as isize - self.anchor.1 as isize,
                    self.tap(a, b),
                )
            })
        })
    }
}

/// Eigenvalues of a periodic convolution operator on an M x N grid,
/// indexed by 2-D frequency `(k, l)` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySymbol {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl FrequencySymbol {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn at(&self, k: usize, l: usize) -> Complex64 {
        self.values[k * self.cols + l]
    }

    /// `|s|^2` at every frequency.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Forward and inverse 2-D DFT plans for a fixed grid size.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.rows * self.cols);
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        // rustfft processes consecutive chunks of the plan length.
        row_plan.process(buf);
        if self.rows > 1 {
            let mut t = transpose(buf, self.rows, self.cols);
            col_plan.process(&mut t);
            let back = transpose(&t, self.cols, self.rows);
            buf.copy_from_slice(&back);
        }
    }

    /// Unnormalized forward DFT in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// Inverse DFT in place, including the `1 / (M N)` normalization.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    pub fn forward(&self, u: &ImageGrid) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> ImageGrid {
        self.inverse_in_place(&mut buf);
        let data = buf.into_iter().map(|c| c.re).collect();
        ImageGrid::from_raw(self.rows, self.cols, data)
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    out
}

/// The periodic operators whose symbols the solver needs.
#[derive(Clone, Copy, Debug)]
pub enum Operator<'a> {
    Kernel(&'a BlurKernel),
    /// Horizontal forward difference.
    GradX,
    /// Vertical forward difference.
    GradY,
    /// `Delta = -grad^T grad`, the periodic five-point Laplacian.
    Laplacian,
}

fn stencil_buffer(rows: usize, cols: usize, taps: &[(isize, isize, f64)]) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
    for &(di, dj, w) in taps {
        let i = di.rem_euclid(rows as isize) as usize;
        let j = dj.rem_euclid(cols as isize) as usize;
        // Taps that wrap onto each other on tiny grids accumulate.
        buf[i * cols + j].re += w;
    }
    buf
}

/// Frequency symbol of `op` on an M x N grid.
pub fn operator_symbol(op: Operator<'_>, rows: usize, cols: usize) -> Result<FrequencySymbol> {
    operator_symbol_with(op, &Fft2::new(rows, cols))
}

pub fn operator_symbol_with(op: Operator<'_>, fft: &Fft2) -> Result<FrequencySymbol> {
    let (rows, cols) = fft.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyGrid { rows, cols });
    }
    let taps: Vec<(isize, isize, f64)> = match op {
        Operator::Kernel(k) => {
            k.check_fits(rows, cols)?;
            k.offsets().collect()
        }
        Operator::GradX => vec![(0, 0, 1.0), (0, 1, -1.0)],
        Operator::GradY => vec![(0, 0, 1.0), (1, 0, -1.0)],
        Operator::Laplacian => vec![
            (0, 0, -4.0),
            (1, 0, 1.0),
            (-1, 0, 1.0),
            (0, 1, 1.0),
            (0, -1, 1.0),
        ],
    };
    let mut buf = stencil_buffer(rows, cols, &taps);
    fft.forward_in_place(&mut buf);
    Ok(FrequencySymbol {
        rows,
        cols,
        values: buf,
    })
}

/// A blur operator bound to a grid size, applying `A` and `A^T` by FFT.
#[derive(Clone, Debug)]
pub struct PeriodicConvolution {
    fft: Fft2,
    symbol: Option<FrequencySymbol>,
}

impl PeriodicConvolution {
    pub fn new(kernel: &BlurKernel, rows: usize, cols: usize) -> Result<Self> {
        let fft = Fft2::new(rows, cols);
        Self::with_fft(kernel, fft)
    }

    pub fn with_fft(kernel: &BlurKernel, fft: Fft2) -> Result<Self> {
        let (rows, cols) = fft.shape();
        kernel.check_fits(rows, cols)?;
        let symbol = if kernel.is_identity() {
            None
        } else {
            Some(operator_symbol_with(Operator::Kernel(kernel), &fft)?)
        };
        Ok(Self { fft, symbol })
    }

    pub fn is_identity(&self) -> bool {
        self.symbol.is_none()
    }

    /// The symbol of `A`; all ones for the identity.
    pub fn symbol(&self) -> FrequencySymbol {
        let (rows, cols) = self.fft.shape();
        match &self.symbol {
            Some(s) => s.clone(),
            None => FrequencySymbol {
                rows,
                cols,
                values: vec![Complex64::new(1.0, 0.0); rows * cols],
            },
        }
    }

    fn apply_with(&self, u: &ImageGrid, conj: bool) -> ImageGrid {
        let Some(sym) = &self.symbol else {
            return u.clone();
        };
        let mut buf = self.fft.forward(u);
        for (b, s) in buf.iter_mut().zip(&sym.values) {
            *b *= if conj { s.conj() } else { *s };
        }
        self.fft.inverse_real(buf)
    }

    pub fn apply(&self, u: &ImageGrid) -> ImageGrid {
        self.apply_with(u, false)
    }

    pub fn apply_adjoint(&self, u: &ImageGrid) -> ImageGrid {
        self.apply_with(u, true)
    }
}

/// Circular convolution of `u` with `kernel`.
pub fn convolve_periodic(u: &ImageGrid, kernel: &BlurKernel) -> Result<ImageGrid> {
    kernel.check_fits(u.rows(), u.cols())?;
    let fft = Fft2::new(u.rows(), u.cols());
    let sym = operator_symbol_with(Operator::Kernel(kernel), &fft)?;
    let mut buf = fft.forward(u);
    for (b, s) in buf.iter_mut().zip(&sym.values) {
        *b *= *s;
    }
    Ok(fft.inverse_real(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{forward_gradient, neg_laplacian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(seed: u64, m: usize, n: usize) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(m, n, |_, _| rng.random_range(0.0..1.0))
    }

    /// Direct spatial circular convolution, independent of the FFT path.
    fn direct_convolve(u: &ImageGrid, k: &BlurKernel) -> ImageGrid {
        let (m, n) = (u.rows() as isize, u.cols() as isize);
        ImageGrid::from_fn(u.rows(), u.cols(), |i, j| {
            k.offsets()
                .map(|(di, dj, w)| {
                    let si = (i as isize - di).rem_euclid(m) as usize;
                    let sj = (j as isize - dj).rem_euclid(n) as usize;
                    w * u.get(si, sj)
                })
                .sum()
        })
    }

    fn average(size: usize) -> BlurKernel {
        let w = 1.0 / (size * size) as f64;
        BlurKernel::centered(size, size, vec![w; size * size]).unwrap()
    }

    #[test]
    fn identity_convolution_round_trips() {
        let u = random_grid(1, 13, 10);
        let out = convolve_periodic(&u, &BlurKernel::identity()).unwrap();
        assert!(out.max_abs_diff(&u) <= 1e-12);
    }

    #[test]
    fn normalized_kernel_preserves_constants() {
        let u = ImageGrid::filled(9, 12, 0.37);
        let out = convolve_periodic(&u, &average(5)).unwrap();
        assert!(out.max_abs_diff(&u) <= 1e-12);
    }

    #[test]
    fn average_fifteen_on_impulse() {
        let mut u = ImageGrid::zeros(32, 32);
        u.set(16, 16, 1.0);
        let out = convolve_periodic(&u, &average(15)).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let inside = (9..=23).contains(&i) && (9..=23).contains(&j);
                let expect = if inside { 1.0 / 225.0 } else { 0.0 };
                assert!((out.get(i, j) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let u = random_grid(3, 11, 7);
        let k = BlurKernel::new(2, 3, vec![0.1, 0.2, 0.3, 0.05, 0.15, 0.2], (1, 0)).unwrap();
        let fast = convolve_periodic(&u, &k).unwrap();
        assert!(fast.max_abs_diff(&direct_convolve(&u, &k)) <= 1e-12);
        let op = PeriodicConvolution::new(&k, 11, 7).unwrap();
        // <A u, v> = <u, A^T v>
        let v = random_grid(4, 11, 7);
        let lhs = op.apply(&u).dot(&v);
        let rhs = u.dot(&op.apply_adjoint(&v));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn kernel_larger_than_image_is_rejected() {
        let u = ImageGrid::zeros(4, 4);
        assert!(matches!(
            convolve_periodic(&u, &average(5)),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn identity_symbol_is_all_ones() {
        let s = operator_symbol(Operator::Kernel(&BlurKernel::identity()), 6, 5).unwrap();
        for v in s.values() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() <= 1e-15);
        }
    }

    #[test]
    fn normalized_blur_symbol_is_one_at_zero_frequency() {
        let s = operator_symbol(Operator::Kernel(&average(3)), 8, 8).unwrap();
        assert!((s.at(0, 0) - Complex64::new(1.0, 0.0)).norm() <= 1e-14);
    }

    #[test]
    fn laplacian_symbol_properties() {
        for (m, n) in [(1, 1), (1, 5), (2, 2), (7, 4), (16, 16)] {
            let lap = operator_symbol(Operator::Laplacian, m, n).unwrap();
            let gx = operator_symbol(Operator::GradX, m, n).unwrap();
            let gy = operator_symbol(Operator::GradY, m, n).unwrap();
            assert_eq!(lap.at(0, 0).re, 0.0);
            for (idx, v) in lap.values().iter().enumerate() {
                assert!(v.im.abs() <= 1e-12);
                assert!(v.re <= 1e-12);
                if idx != 0 {
                    assert!(v.re < -1e-12, "zero away from dc at {idx} for {m}x{n}");
                }
                let composed = -(gx.values()[idx].norm_sqr() + gy.values()[idx].norm_sqr());
                assert!((v.re - composed).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn spectral_neg_laplacian_matches_spatial() {
        for seed in 0..5 {
            let u = random_grid(seed, 16, 16);
            let fft = Fft2::new(16, 16);
            let lap = operator_symbol_with(Operator::Laplacian, &fft).unwrap();
            let mut buf = fft.forward(&u);
            for (b, s) in buf.iter_mut().zip(lap.values()) {
                *b *= -*s;
            }
            let spectral = fft.inverse_real(buf);
            assert!(spectral.max_abs_diff(&neg_laplacian(&u)) <= 1e-10);
        }
    }

    #[test]
    fn gradient_symbols_match_spatial_gradient() {
        let u = random_grid(9, 6, 10);
        let fft = Fft2::new(6, 10);
        let g = forward_gradient(&u);
        for (op, expect) in [(Operator::GradX, &g.x), (Operator::GradY, &g.y)] {
            let s = operator_symbol_with(op, &fft).unwrap();
            let mut buf = fft.forward(&u);
            for (b, v) in buf.iter_mut().zip(s.values()) {
                *b *= v;
            }
            assert!(fft.inverse_real(buf).max_abs_diff(expect) <= 1e-12);
        }
    }

    #[test]
    fn transposed_kernel_swaps_axes() {
        let k = BlurKernel::new(1, 3, vec![0.2, 0.5, 0.3], (0, 1)).unwrap();
        let t = k.transposed();
        assert_eq!((t.rows(), t.cols(), t.anchor()), (3, 1, (1, 0)));
        assert_eq!(t.taps(), k.taps());
    }
}
