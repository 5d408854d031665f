//! Blur kernels and noise models for degrading test images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::pipeline::MultiChannelImage;
use crate::spectral::{convolve_periodic, BlurKernel};

/// `size x size` box filter; `size` must be odd.
pub fn make_average_kernel(size: usize) -> Result<BlurKernel> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidKernel(format!("average kernel size {size} must be odd and positive")));
    }
    if size == 1 {
        return Ok(BlurKernel::identity());
    }
    let w = 1.0 / (size * size) as f64;
    BlurKernel::centered(size, size, vec![w; size * size])
}

/// Linear motion blur of `length` pixels at `angle_degrees` counter-clockwise
/// from the horizontal.
///
/// Each tap of a `(2R+1)^2` box gets weight `max(0, 1 - d)`, `d` the distance
/// from the tap center to the segment of length `length - 1` through the
/// origin; all-zero outer rows and columns are trimmed symmetrically and the
/// weights normalized. Orientation cosines and sines below `1e-12` are
/// snapped to zero so axis-aligned angles rasterize exactly.
pub fn make_motion_kernel(length: usize, angle_degrees: f64) -> Result<BlurKernel> {
    if length == 0 {
        return Err(Error::InvalidKernel("motion length must be at least 1".into()));
    }
    if !angle_degrees.is_finite() {
        return Err(Error::InvalidKernel(format!("motion angle {angle_degrees} is not finite")));
    }
    if length == 1 {
        return Ok(BlurKernel::identity());
    }
    let half = (length as f64 - 1.0) / 2.0;
    let theta = angle_degrees.to_radians();
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (c, s) = (snap(theta.cos()), snap(theta.sin()));
    let r = half.ceil() as isize + 1;
    let side = (2 * r + 1) as usize;

    let mut w = vec![0.0; side * side];
    for di in -r..=r {
        for dj in -r..=r {
            // x to the right, y up
            let (x, y) = (dj as f64, -di as f64);
            let t = (x * c + y * s).clamp(-half, half);
            let d = (x - t * c).hypot(y - t * s);
            w[(di + r) as usize * side + (dj + r) as usize] = (1.0 - d).max(0.0);
        }
    }
    let nonzero = |di: isize, dj: isize| w[(di + r) as usize * side + (dj + r) as usize] > 0.0;
    let mut rmax = 0;
    let mut cmax = 0;
    for di in -r..=r {
        for dj in -r..=r {
            if nonzero(di, dj) {
                rmax = rmax.max(di.abs());
                cmax = cmax.max(dj.abs());
            }
        }
    }
    // Summing in sorted order makes the normalization orientation-independent.
    let mut sorted: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    let (rows, cols) = ((2 * rmax + 1) as usize, (2 * cmax + 1) as usize);
    let mut taps = Vec::with_capacity(rows * cols);
    for di in -rmax..=rmax {
        for dj in -cmax..=cmax {
            taps.push(w[(di + r) as usize * side + (dj + r) as usize] / total);
        }
    }
    BlurKernel::centered(rows, cols, taps)
}

/// Periodic blur of every channel.
pub fn blur_image(u: &MultiChannelImage, kernel: &BlurKernel) -> Result<MultiChannelImage> {
    let channels = u
        .channels()
        .iter()
        .map(|c| convolve_periodic(c, kernel))
        .collect::<Result<Vec<_>>>()?;
    MultiChannelImage::new(channels, u.roles().to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseKind {
    /// Additive `N(mean, variance)`, clamped to `[0, 1]`.
    Gaussian { mean: f64, variance: f64 },
    /// Each value replaced with probability `fraction` by 0 or 1, equal odds.
    SaltPepper { fraction: f64 },
    /// Each value replaced with probability `fraction` by a `U[0, 1)` draw.
    RandomValued { fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        let spec = Self { kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::InvalidNoise(format!(
                        "gaussian needs a finite mean and variance >= 0, got ({mean}, {variance})"
                    )));
                }
            }
            NoiseKind::SaltPepper { fraction } | NoiseKind::RandomValued { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::InvalidNoise(format!("fraction {fraction} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

type Perturb = dyn FnMut(f64, &mut ChaCha8Rng) -> f64;

/// Applies the noise channel by channel, pixels in row-major order, from one
/// generator seeded with `spec.seed`.
pub fn add_noise(u: &MultiChannelImage, spec: &NoiseSpec) -> Result<MultiChannelImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut perturb: Box<Perturb> = match spec.kind {
        NoiseKind::Gaussian { mean, variance } => {
            let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidNoise(e.to_string()))?;
            Box::new(move |v, rng| (v + normal.sample(rng)).clamp(0.0, 1.0))
        }
        NoiseKind::SaltPepper { fraction } => Box::new(move |v, rng| {
            if rng.random::<f64>() < fraction {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        }),
        NoiseKind::RandomValued { fraction } => Box::new(move |v, rng| {
            if rng.random::<f64>() < fraction {
                rng.random::<f64>()
            } else {
                v
            }
        }),
    };
    let mut channels = Vec::with_capacity(u.num_channels());
    for c in u.channels() {
        let data: Vec<f64> = c.as_slice().iter().map(|&v| perturb(v, &mut rng)).collect();
        channels.push(ImageGrid::new(c.rows(), c.cols(), data)?);
    }
    MultiChannelImage::new(channels, u.roles().to_vec())
}

/// Convenience for one channel.
pub fn add_noise_gray(u: &ImageGrid, spec: &NoiseSpec) -> Result<ImageGrid> {
    Ok(add_noise(&MultiChannelImage::gray(u.clone()), spec)?
        .into_channels()
        .remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn average_kernels() {
        assert!(make_average_kernel(1).unwrap().is_identity());
        assert!(make_average_kernel(4).is_err());
        assert!(make_average_kernel(0).is_err());
        let k = make_average_kernel(15).unwrap();
        assert_eq!(k.taps().len(), 225);
        assert!(k.taps().iter().all(|t| *t == 1.0 / 225.0));
        assert!((k.sum() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn motion_kernel_axis_aligned() {
        assert!(make_motion_kernel(1, 33.0).unwrap().is_identity());
        let k = make_motion_kernel(5, 0.0).unwrap();
        assert_eq!((k.rows(), k.cols()), (1, 5));
        assert!(k.taps().iter().all(|t| *t == 0.2));
        let v = make_motion_kernel(5, 90.0).unwrap();
        assert_eq!(v, k.transposed());
        assert!(make_motion_kernel(0, 0.0).is_err());
    }

    #[test]
    fn motion_kernel_diagonal_is_normalized_and_symmetric() {
        let k = make_motion_kernel(5, 45.0).unwrap();
        assert_eq!(k.rows(), k.cols());
        assert!((k.sum() - 1.0).abs() <= 1e-14);
        let n = k.rows();
        for a in 0..n {
            for b in 0..n {
                // point symmetry about the center
                assert!((k.tap(a, b) - k.tap(n - 1 - a, n - 1 - b)).abs() <= 1e-15);
            }
        }
        // mass lies on the anti-diagonal (up and to the right)
        assert!(k.tap(0, n - 1) > k.tap(0, 0));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = MultiChannelImage::gray(ImageGrid::filled(20, 20, 0.3));
        for k in [make_average_kernel(5).unwrap(), make_motion_kernel(7, 30.0).unwrap()] {
            let out = blur_image(&img, &k).unwrap();
            assert!(out.channel(0).max_abs_diff(img.channel(0)) <= 1e-14);
        }
    }

    #[test]
    fn zero_fraction_is_identity() {
        let img = MultiChannelImage::gray(ImageGrid::from_fn(8, 8, |i, j| ((i + j) % 3) as f64 / 2.0));
        for kind in [NoiseKind::SaltPepper { fraction: 0.0 }, NoiseKind::RandomValued { fraction: 0.0 }] {
            assert_eq!(add_noise(&img, &NoiseSpec::new(kind, 3).unwrap()).unwrap(), img);
        }
    }

    #[test]
    fn full_salt_pepper_is_binary() {
        let img = MultiChannelImage::gray(ImageGrid::filled(16, 16, 0.5));
        let out = add_noise(&img, &NoiseSpec::new(NoiseKind::SaltPepper { fraction: 1.0 }, 1).unwrap()).unwrap();
        assert!(out.channel(0).as_slice().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn empirical_fraction_within_one_percent() {
        let img = MultiChannelImage::gray(ImageGrid::filled(512, 512, 0.5));
        for kind in [NoiseKind::SaltPepper { fraction: 0.3 }, NoiseKind::RandomValued { fraction: 0.65 }] {
            let out = add_noise(&img, &NoiseSpec::new(kind, 11).unwrap()).unwrap();
            let changed = out.channel(0).as_slice().iter().filter(|v| **v != 0.5).count();
            let frac = changed as f64 / (512.0 * 512.0);
            let want = match kind {
                NoiseKind::SaltPepper { fraction } | NoiseKind::RandomValued { fraction } => fraction,
                _ => unreachable!(),
            };
            assert!((frac - want).abs() <= 0.01, "{kind:?}: {frac}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(NoiseSpec::new(NoiseKind::SaltPepper { fraction: 1.5 }, 0).is_err());
        assert!(NoiseSpec::new(NoiseKind::Gaussian { mean: 0.0, variance: -1.0 }, 0).is_err());
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_interval_and_are_reproducible(
            seed in any::<u64>(), which in 0usize..3, fraction in 0.0f64..=1.0, variance in 0.0f64..0.5,
        ) {
            let kind = match which {
                0 => NoiseKind::Gaussian { mean: 0.0, variance },
                1 => NoiseKind::SaltPepper { fraction },
                _ => NoiseKind::RandomValued { fraction },
            };
            let c = ImageGrid::from_fn(9, 7, |i, j| ((i * 7 + j) % 10) as f64 / 9.0);
            let img = MultiChannelImage::rgb(c.clone(), c.transposed().transposed(), c).unwrap();
            let spec = NoiseSpec::new(kind, seed).unwrap();
            let a = add_noise(&img, &spec).unwrap();
            let b = add_noise(&img, &spec).unwrap();
            prop_assert_eq!(&a, &b);
            for ch in a.channels() {
                prop_assert!(ch.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
