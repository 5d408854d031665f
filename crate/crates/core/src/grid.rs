//! Image grids on a periodic M x N lattice and the discrete gradient.
//!
//! Pixel `(i, j)` is row `i`, column `j`, stored row-major. The horizontal
//! forward difference wraps column 0 onto column N-1 and the vertical one
//! wraps row 0 onto row M-1:
//!
//! ```text
//! (dx u)[i][j] = u[i][j] - u[i][j-1]      (u[i][0] - u[i][N-1] for j = 0)
//! (dy u)[i][j] = u[i][j] - u[i-1][j]      (u[0][j] - u[M-1][j] for i = 0)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One real-valued channel on an M x N periodic lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyGrid { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::BufferLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid construction"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Unchecked construction for internal producers that may legitimately
    /// emit non-finite values (a diverging iterate is reported, not panicked on).
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// Panics if either dimension is zero.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a grid from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            assert_eq!(r.as_ref().len(), n, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(m, n, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean distance `||self - other||_2`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Periodic shift: `out[i][j] = self[i - di][j - dj]`.
    pub fn shifted(&self, di: isize, dj: isize) -> Self {
        let (m, n) = (self.rows as isize, self.cols as isize);
        Self::from_fn(self.rows, self.cols, |i, j| {
            let si = (i as isize - di).rem_euclid(m) as usize;
            let sj = (j as isize - dj).rem_euclid(n) as usize;
            self.get(si, sj)
        })
    }

    pub fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// A pair of grids holding the horizontal and vertical components of a
/// vector field such as a gradient, the ADMM split variable or its dual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub x: ImageGrid,
    pub y: ImageGrid,
}

/// The three norms on `X x X` used by the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNorms {
    /// `sum |px| + |py|`
    pub l1: f64,
    /// `sqrt(sum px^2 + py^2)`
    pub l2: f64,
    /// `sum sqrt(px^2 + py^2)`
    pub l21: f64,
}

impl GradientField {
    pub fn new(x: ImageGrid, y: ImageGrid) -> Result<Self> {
        x.check_same_shape(&y)?;
        Ok(Self { x, y })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            x: ImageGrid::zeros(rows, cols),
            y: ImageGrid::zeros(rows, cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }

    #[inline]
    pub fn at(&self, idx: usize) -> (f64, f64) {
        (self.x.as_slice()[idx], self.y.as_slice()[idx])
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn norm_sq(&self) -> f64 {
        self.x.norm_sq() + self.y.norm_sq()
    }

    pub fn l1_norm(&self) -> f64 {
        self.x
            .as_slice()
            .iter()
            .zip(self.y.as_slice())
            .map(|(a, b)| a.abs() + b.abs())
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l21_norm(&self) -> f64 {
        self.x
            .as_slice()
            .iter()
            .zip(self.y.as_slice())
            .map(|(a, b)| a.hypot(*b))
            .sum()
    }

    pub fn norms(&self) -> FieldNorms {
        FieldNorms {
            l1: self.l1_norm(),
            l2: self.l2_norm(),
            l21: self.l21_norm(),
        }
    }

    /// Largest component magnitude over both grids.
    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self {
            x: self.x.zip_map(&other.x, f),
            y: self.y.zip_map(&other.y, f),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.sub(other).norm_sq()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Periodic forward differences `(dx u, dy u)`.
pub fn forward_gradient(u: &ImageGrid) -> GradientField {
    let (m, n) = u.shape();
    let src = u.as_slice();
    let mut gx = vec![0.0; m * n];
    let mut gy = vec![0.0; m * n];
    for i in 0..m {
        let prev_row = if i == 0 { m - 1 } else { i - 1 };
        for j in 0..n {
            let prev_col = if j == 0 { n - 1 } else { j - 1 };
            let here = src[i * n + j];
            gx[i * n + j] = here - src[i * n + prev_col];
            gy[i * n + j] = here - src[prev_row * n + j];
        }
    }
    GradientField {
        x: ImageGrid { rows: m, cols: n, data: gx },
        y: ImageGrid { rows: m, cols: n, data: gy },
    }
}

/// Adjoint of [`forward_gradient`]: `(p_x[i][j] - p_x[i][j+1]) + (p_y[i][j] - p_y[i+1][j])`
/// with periodic wrap, so that `<grad u, p> = <u, grad^T p>`.
pub fn gradient_adjoint(p: &GradientField) -> ImageGrid {
    let (m, n) = p.shape();
    let px = p.x.as_slice();
    let py = p.y.as_slice();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let next_row = if i + 1 == m { 0 } else { i + 1 };
        for j in 0..n {
            let next_col = if j + 1 == n { 0 } else { j + 1 };
            let k = i * n + j;
            out[k] = (px[k] - px[i * n + next_col]) + (py[k] - py[next_row * n + j]);
        }
    }
    ImageGrid {
        rows: m,
        cols: n,
        data: out,
    }
}

/// `grad^T grad u`, i.e. the negative periodic five-point Laplacian.
pub fn neg_laplacian(u: &ImageGrid) -> ImageGrid {
    gradient_adjoint(&forward_gradient(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, m: usize, n: usize) -> ImageGrid {
        ImageGrid::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = forward_gradient(&ImageGrid::filled(5, 7, 0.3));
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_two_by_two() {
        let u = ImageGrid::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        let g = forward_gradient(&u);
        assert_eq!(g.x.as_slice(), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(g.y.as_slice(), &[-2.0, -2.0, 2.0, 2.0]);
    }

    #[test]
    fn gradient_single_pixel_wraps_to_itself() {
        let g = forward_gradient(&ImageGrid::filled(1, 1, 4.2));
        assert_eq!(g.x.as_slice(), &[0.0]);
        assert_eq!(g.y.as_slice(), &[0.0]);
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let p = GradientField::zeros(3, 4);
        assert_eq!(gradient_adjoint(&p).max_abs(), 0.0);
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (m, n) = (rng.random_range(1..12), rng.random_range(1..12));
            let u = random_grid(&mut rng, m, n);
            let p = GradientField {
                x: random_grid(&mut rng, m, n),
                y: random_grid(&mut rng, m, n),
            };
            let lhs = forward_gradient(&u).dot(&p);
            let rhs = u.dot(&gradient_adjoint(&p));
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_grid(&mut rng, 6, 9);
        for (di, dj) in [(1, 0), (0, 1), (-1, 2), (3, -4)] {
            let lhs = forward_gradient(&u.shifted(di, dj));
            let g = forward_gradient(&u);
            assert_eq!(lhs.x, g.x.shifted(di, dj));
            assert_eq!(lhs.y, g.y.shifted(di, dj));
        }
    }

    #[test]
    fn norms_examples() {
        let p = GradientField {
            x: ImageGrid::filled(1, 1, 3.0),
            y: ImageGrid::filled(1, 1, 4.0),
        };
        assert_eq!(p.norms(), FieldNorms { l1: 7.0, l2: 5.0, l21: 5.0 });
        let z = GradientField::zeros(2, 2).norms();
        assert_eq!((z.l1, z.l2, z.l21), (0.0, 0.0, 0.0));

        let u = ImageGrid::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        let n = forward_gradient(&u).norms();
        assert_eq!(n.l1, 12.0);
        assert!((n.l2 - 20f64.sqrt()).abs() < 1e-14);
        assert!((n.l21 - 4.0 * 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn norm_ordering_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let (m, n) = (rng.random_range(1..6), rng.random_range(1..6));
            let p = GradientField {
                x: random_grid(&mut rng, m, n),
                y: random_grid(&mut rng, m, n),
            };
            let nr = p.norms();
            assert!(nr.l2 <= nr.l21 * (1.0 + 1e-14));
            assert!(nr.l21 <= nr.l1 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            ImageGrid::new(0, 3, vec![]),
            Err(Error::EmptyGrid { .. })
        ));
        assert!(matches!(
            ImageGrid::new(2, 2, vec![0.0; 3]),
            Err(Error::BufferLength { .. })
        ));
        assert!(matches!(
            ImageGrid::new(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }
}
