//! Smoothing, lifting and thresholding.
//!
//! Grayscale inputs are smoothed and clustered directly, optionally with an
//! intensity-inhomogeneity (IIH) channel appended before smoothing. RGB inputs
//! are smoothed per channel and lifted with their CIELAB coordinates, giving
//! six clustering channels. All clustering features are min-max rescaled to
//! `[0, 1]` before K-means.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmOutput, FullDiagnostics, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::metrics::LabelMap;
use crate::spectral::BlurKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelRole {
    Gray,
    Red,
    Green,
    Blue,
    LabL,
    LabA,
    LabB,
    Iih,
}

const RGB: [ChannelRole; 3] = [ChannelRole::Red, ChannelRole::Green, ChannelRole::Blue];

/// One or more same-sized channels with a role tag each.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelImage {
    channels: Vec<ImageGrid>,
    roles: Vec<ChannelRole>,
}

impl MultiChannelImage {
    pub fn new(channels: Vec<ImageGrid>, roles: Vec<ChannelRole>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidImage("at least one channel required".into()));
        }
        if channels.len() != roles.len() {
            return Err(Error::InvalidImage(format!(
                "{} channels but {} role tags",
                channels.len(),
                roles.len()
            )));
        }
        for c in &channels[1..] {
            channels[0].check_same_shape(c)?;
        }
        Ok(Self { channels, roles })
    }

    pub fn gray(u: ImageGrid) -> Self {
        Self {
            channels: vec![u],
            roles: vec![ChannelRole::Gray],
        }
    }

    pub fn rgb(r: ImageGrid, g: ImageGrid, b: ImageGrid) -> Result<Self> {
        Self::new(vec![r, g, b], RGB.to_vec())
    }

    pub fn channels(&self) -> &[ImageGrid] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &ImageGrid {
        &self.channels[idx]
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.channels[0].shape()
    }

    pub fn is_rgb(&self) -> bool {
        self.roles == RGB
    }

    pub fn into_channels(self) -> Vec<ImageGrid> {
        self.channels
    }

    /// The feature vector of pixel `idx` across all channels.
    pub fn pixel(&self, idx: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c.as_slice()[idx]).collect()
    }

    fn with_channels(&self, channels: Vec<ImageGrid>) -> Self {
        Self {
            channels,
            roles: self.roles.clone(),
        }
    }
}

/// Smooths every channel independently with the same configuration.
pub fn smooth_channels(f: &MultiChannelImage, kernel: &BlurKernel, cfg: &SolverConfig) -> Result<MultiChannelImage> {
    let outs = smooth_channels_detailed(f, kernel, cfg, false)?;
    Ok(f.with_channels(outs.into_iter().map(|o| o.u).collect()))
}

/// Per-channel solver outputs, in channel order. Channels are solved in parallel.
pub fn smooth_channels_detailed(
    f: &MultiChannelImage,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    diagnostics: bool,
) -> Result<Vec<AdmmOutput>> {
    cfg.validate()?;
    f.channels
        .par_iter()
        .map(|c| {
            if diagnostics {
                admm_solve(c, kernel, cfg, &mut FullDiagnostics)
            } else {
                admm_solve(c, kernel, cfg, &mut ())
            }
        })
        .collect()
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// sRGB in `[0, 1]` to CIELAB under D65. The white point is the image of
/// sRGB white, so every gray lands on `a = b = 0` up to round-off.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let mut xyz = [0.0; 3];
    let mut white = [0.0; 3];
    for r in 0..3 {
        xyz[r] = (0..3).map(|c| SRGB_TO_XYZ[r][c] * lin[c]).sum();
        white[r] = SRGB_TO_XYZ[r].iter().sum();
    }
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Appends the CIELAB coordinates of a clamped RGB image, giving six channels.
pub fn lift_to_lab(u_rgb: &MultiChannelImage) -> Result<MultiChannelImage> {
    if u_rgb.num_channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            found: u_rgb.num_channels(),
        });
    }
    if !u_rgb.is_rgb() {
        return Err(Error::InvalidImage("Lab lifting requires channels tagged R, G, B".into()));
    }
    let (m, n) = u_rgb.shape();
    let mut lab = [vec![0.0; m * n], vec![0.0; m * n], vec![0.0; m * n]];
    for k in 0..m * n {
        let p = u_rgb.pixel(k);
        let v = srgb_to_lab([p[0], p[1], p[2]]);
        for (channel, value) in lab.iter_mut().zip(v) {
            channel[k] = value;
        }
    }
    let mut channels = u_rgb.channels.clone();
    for data in lab {
        channels.push(ImageGrid::new(m, n, data)?);
    }
    let mut roles = RGB.to_vec();
    roles.extend([ChannelRole::LabL, ChannelRole::LabA, ChannelRole::LabB]);
    MultiChannelImage::new(channels, roles)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IihConfig {
    pub patch_radius: usize,
}

impl Default for IihConfig {
    /// 7 x 7 patches.
    fn default() -> Self {
        Self { patch_radius: 3 }
    }
}

impl IihConfig {
    pub fn new(patch_radius: usize) -> Result<Self> {
        if patch_radius == 0 {
            return Err(Error::InvalidConfig("IIH patch radius must be at least 1".into()));
        }
        Ok(Self { patch_radius })
    }
}

#[derive(Clone, Copy)]
struct Patch {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

impl Patch {
    fn around(i: usize, j: usize, radius: usize, m: usize, n: usize) -> Self {
        Self {
            r0: i.saturating_sub(radius),
            r1: (i + radius).min(m - 1),
            c0: j.saturating_sub(radius),
            c1: (j + radius).min(n - 1),
        }
    }

    fn count(&self) -> usize {
        (self.r1 - self.r0 + 1) * (self.c1 - self.c0 + 1)
    }
}

/// Intensity-inhomogeneity channel.
///
/// With patch means `m_ij` over the border-truncated patch `P_ij`,
/// `D = mean_ij mean_{P_ij} (u - m_ij)^2` and the output at `(i, j)` is the
/// fraction of `P_ij` where `(m_ij - u)^2 >= D`. The image is first shifted by
/// its top-left value; the channel is shift-invariant and the shift makes
/// patch means of flat areas exact, so a constant image gives `D = 0` and an
/// all-ones channel.
pub fn iih_channel(u: &ImageGrid, cfg: &IihConfig) -> Result<ImageGrid> {
    IihConfig::new(cfg.patch_radius)?;
    let (m, n) = u.shape();
    let base = u.get(0, 0);
    let v = u.map(|x| x - base);
    let src = v.as_slice();
    let patch = |k: usize| Patch::around(k / n, k % n, cfg.patch_radius, m, n);

    let means: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|k| {
            let p = patch(k);
            let mut s = 0.0;
            for a in p.r0..=p.r1 {
                for b in p.c0..=p.c1 {
                    s += src[a * n + b];
                }
            }
            s / p.count() as f64
        })
        .collect();
    let spread: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|k| {
            let p = patch(k);
            let mut s = 0.0;
            for a in p.r0..=p.r1 {
                for b in p.c0..=p.c1 {
                    let d = src[a * n + b] - means[k];
                    s += d * d;
                }
            }
            s / p.count() as f64
        })
        .collect();
    // Sequential left-to-right sum keeps D independent of the thread count.
    let indicator = spread.iter().fold(0.0, |acc, s| acc + s) / (m * n) as f64;
    let out: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|k| {
            let p = patch(k);
            let mut hits = 0usize;
            for a in p.r0..=p.r1 {
                for b in p.c0..=p.c1 {
                    let d = means[k] - src[a * n + b];
                    if d * d >= indicator {
                        hits += 1;
                    }
                }
            }
            hits as f64 / p.count() as f64
        })
        .collect();
    ImageGrid::new(m, n, out)
}

/// Min-max rescaling of each channel to `[0, 1]`; constant channels become zero.
pub fn rescale_channels(u: &MultiChannelImage) -> MultiChannelImage {
    let channels = u
        .channels
        .iter()
        .map(|c| {
            let (lo, hi) = c.min_max();
            if hi > lo {
                let span = hi - lo;
                c.map(|v| (v - lo) / span)
            } else {
                ImageGrid::zeros(c.rows(), c.cols())
            }
        })
        .collect();
    u.with_channels(channels)
}

/// K-means++ seeding with restarts and Lloyd iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    /// Labels in `1..=k`.
    pub labels: LabelMap,
    /// `k` centroids in the clustering feature space.
    pub centroids: Vec<Vec<f64>>,
    /// Piecewise-constant image whose pixel values are the centroid of their label.
    pub approx: MultiChannelImage,
    pub k: usize,
    /// Within-cluster sum of squares of the selected restart.
    pub wcss: f64,
    /// Index of the selected restart.
    pub restart: usize,
}

impl SegmentationResult {
    /// Dimension of the clustering feature space.
    pub fn feature_dim(&self) -> usize {
        self.approx.num_channels()
    }
}

struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn get(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid with ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, dist_sq(p, &centroids[0]));
    for (c, cen) in centroids.iter().enumerate().skip(1) {
        let d = dist_sq(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

struct Restart {
    centroids: Vec<Vec<f64>>,
    assign: Vec<usize>,
    wcss: f64,
    all_used: bool,
}

fn kmeans_pp_init(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points.get(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|p| dist_sq(points.get(p), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = None;
            for (p, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    pick = Some(p);
                    break;
                }
            }
            // Round-off can leave target beyond the last partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = points.get(pick).to_vec();
        for (p, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist_sq(points.get(p), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Mean as `first + sum(x - first) / n` so clusters of identical points
/// reproduce that point exactly.
fn cluster_means(points: &Points, assign: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points.dim;
    let mut first: Vec<Option<usize>> = vec![None; k];
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in assign.iter().enumerate() {
        let anchor = *first[c].get_or_insert(p);
        let (x, a) = (points.get(p), points.get(anchor));
        for d in 0..dim {
            sums[c][d] += x[d] - a[d];
        }
        counts[c] += 1;
    }
    let means = (0..k)
        .map(|c| match first[c] {
            Some(a) => {
                let base = points.get(a);
                (0..dim).map(|d| base[d] + sums[c][d] / counts[c] as f64).collect()
            }
            None => vec![0.0; dim],
        })
        .collect();
    (means, counts)
}

fn run_restart(points: &Points, k: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Restart {
    let n = points.len();
    let mut centroids = kmeans_pp_init(points, k, rng);
    let mut assign: Vec<usize> = (0..n).map(|p| nearest(points.get(p), &centroids).0).collect();
    for _ in 0..cfg.max_iters {
        let (mut means, counts) = cluster_means(points, &assign, k);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // Farthest point from its own centroid, ties to the lowest index.
            let mut far = (0, -1.0);
            for p in 0..n {
                let d = dist_sq(points.get(p), &means[assign[p]]);
                if d > far.1 {
                    far = (p, d);
                }
            }
            means[c] = points.get(far.0).to_vec();
            assign[far.0] = c;
        }
        centroids = means;
        let next: Vec<usize> = (0..n).map(|p| nearest(points.get(p), &centroids).0).collect();
        let changed = next != assign;
        assign = next;
        if !changed {
            break;
        }
    }
    let mut used = vec![false; k];
    let mut wcss = 0.0;
    for (p, &c) in assign.iter().enumerate() {
        used[c] = true;
        wcss += dist_sq(points.get(p), &centroids[c]);
    }
    Restart {
        centroids,
        assign,
        wcss,
        all_used: used.iter().all(|u| *u),
    }
}

fn count_distinct_up_to(points: &Points, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for p in 0..points.len() {
        let key: Vec<u64> = points.get(p).iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

/// K-means with the default five restarts of at most 100 Lloyd iterations.
pub fn kmeans_threshold(u_star: &MultiChannelImage, k: usize, seed: u64) -> Result<SegmentationResult> {
    kmeans_with(u_star, k, seed, &KMeansConfig::default())
}

/// Restarts run in parallel, restart `r` drawing from stream `r` of the seeded
/// generator. The lowest within-cluster sum of squares wins, ties to the lower
/// restart index.
pub fn kmeans_with(
    u_star: &MultiChannelImage,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<SegmentationResult> {
    if k < 2 {
        return Err(Error::InvalidClusterCount(k));
    }
    if cfg.restarts == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidConfig("K-means needs at least one restart and one iteration".into()));
    }
    let (m, n) = u_star.shape();
    let dim = u_star.num_channels();
    let mut data = Vec::with_capacity(m * n * dim);
    for p in 0..m * n {
        data.extend(u_star.pixel(p));
    }
    let points = Points { data, dim };
    let distinct = count_distinct_up_to(&points, k);
    if distinct < k {
        return Err(Error::TooFewDistinct { k, distinct });
    }

    let runs: Vec<Restart> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            run_restart(&points, k, cfg, &mut rng)
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            (!a.all_used, a.wcss, *ia)
                .partial_cmp(&(!b.all_used, b.wcss, *ib))
                .expect("finite costs")
        })
        .expect("at least one restart");

    let labels = LabelMap::new(m, n, best.assign.iter().map(|&c| c as u32 + 1).collect())?;
    let approx_channels = (0..dim)
        .map(|d| ImageGrid::new(m, n, best.assign.iter().map(|&c| best.centroids[c][d]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentationResult {
        labels,
        approx: u_star.with_channels(approx_channels),
        centroids: best.centroids,
        k,
        wcss: best.wcss,
        restart,
    })
}

/// Piecewise-constant approximation of `f` using the mean of `f` over each region.
pub fn region_means(f: &MultiChannelImage, labels: &LabelMap) -> Result<MultiChannelImage> {
    let (m, n) = f.shape();
    if labels.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            expected: (m, n),
            found: labels.shape(),
        });
    }
    let k = labels.num_labels();
    let channels = f
        .channels
        .iter()
        .map(|c| {
            let src = c.as_slice();
            let mut first: Vec<Option<f64>> = vec![None; k];
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for (p, &l) in labels.as_slice().iter().enumerate() {
                let idx = l as usize - 1;
                let base = *first[idx].get_or_insert(src[p]);
                sums[idx] += src[p] - base;
                counts[idx] += 1;
            }
            let means: Vec<f64> = (0..k)
                .map(|i| first[i].map_or(0.0, |b| b + sums[i] / counts[i] as f64))
                .collect();
            ImageGrid::new(m, n, labels.as_slice().iter().map(|&l| means[l as usize - 1]).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(f.with_channels(channels))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOptions {
    pub use_iih: bool,
    pub seed: u64,
    pub iih: IihConfig,
}

/// Summary of one channel's smoothing solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSolve {
    pub role: ChannelRole,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SegmentOutput {
    pub result: SegmentationResult,
    /// Channels that were smoothed (the input, plus IIH when requested).
    pub smoothing_input: MultiChannelImage,
    pub smoothed: MultiChannelImage,
    /// Rescaled clustering features.
    pub features: MultiChannelImage,
    /// Region means of the original input channels.
    pub region_means: MultiChannelImage,
    /// Solver output per smoothed channel.
    pub solves: Vec<AdmmOutput>,
}

/// Full smoothing, optional lifting and thresholding for a grayscale or RGB image.
pub fn segment(
    f: &MultiChannelImage,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    k: usize,
    options: &SegmentOptions,
) -> Result<SegmentationResult> {
    Ok(segment_detailed(f, kernel, cfg, k, options, false)?.result)
}

pub fn segment_detailed(
    f: &MultiChannelImage,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    k: usize,
    options: &SegmentOptions,
    diagnostics: bool,
) -> Result<SegmentOutput> {
    let is_gray = f.roles() == [ChannelRole::Gray];
    if !is_gray && !f.is_rgb() {
        return Err(Error::InvalidImage(format!(
            "expected one gray channel or R, G, B channels, found {:?}",
            f.roles()
        )));
    }
    if options.use_iih && !is_gray {
        return Err(Error::InvalidConfig("the IIH channel is defined for grayscale input only".into()));
    }
    let smoothing_input = if options.use_iih {
        let iih = iih_channel(f.channel(0), &options.iih)?;
        MultiChannelImage::new(
            vec![f.channel(0).clone(), iih],
            vec![ChannelRole::Gray, ChannelRole::Iih],
        )?
    } else {
        f.clone()
    };
    let solves = smooth_channels_detailed(&smoothing_input, kernel, cfg, diagnostics)?;
    let smoothed = smoothing_input.with_channels(solves.iter().map(|o| o.u.clone()).collect());
    let lifted = if f.is_rgb() { lift_to_lab(&smoothed)? } else { smoothed.clone() };
    let features = rescale_channels(&lifted);
    let result = kmeans_threshold(&features, k, options.seed)?;
    let region_means = region_means(f, &result.labels)?;
    Ok(SegmentOutput {
        result,
        smoothing_input,
        smoothed,
        features,
        region_means,
        solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::naive_iih;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid(rows: &[&[f64]]) -> ImageGrid {
        ImageGrid::from_rows(rows).unwrap()
    }

    #[test]
    fn lab_reference_points() {
        let w = srgb_to_lab([1.0, 1.0, 1.0]);
        assert!((w[0] - 100.0).abs() < 1e-9);
        assert!(w[1].abs() <= 0.5 && w[2].abs() <= 0.5);
        let b = srgb_to_lab([0.0, 0.0, 0.0]);
        assert!(b[0].abs() < 1e-12);
        assert_eq!((b[1], b[2]), (0.0, 0.0));
        for c in [0.01, 0.2, 0.5, 0.93] {
            let g = srgb_to_lab([c, c, c]);
            assert!(g[1].abs() < 1e-9 && g[2].abs() < 1e-9, "{c}: {g:?}");
        }
        // pure red, standard table value (53.24, 80.09, 67.20)
        let r = srgb_to_lab([1.0, 0.0, 0.0]);
        assert!((r[0] - 53.24).abs() < 0.05 && (r[1] - 80.09).abs() < 0.1 && (r[2] - 67.20).abs() < 0.1);
    }

    #[test]
    fn lift_adds_three_channels() {
        let c = ImageGrid::filled(2, 2, 0.5);
        let img = MultiChannelImage::rgb(c.clone(), c.clone(), c.clone()).unwrap();
        let lifted = lift_to_lab(&img).unwrap();
        assert_eq!(lifted.num_channels(), 6);
        assert_eq!(&lifted.channels()[..3], img.channels());
        assert!(lifted.channel(4).max_abs() < 1e-9);
        assert!(matches!(
            lift_to_lab(&MultiChannelImage::gray(c)),
            Err(Error::ChannelCount { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn iih_constant_image_is_all_ones() {
        let u = ImageGrid::filled(9, 11, 0.37);
        let out = iih_channel(&u, &IihConfig::default()).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn iih_half_split_matches_naive() {
        let u = ImageGrid::from_fn(16, 16, |_, j| if j < 8 { 0.2 } else { 0.9 });
        let fast = iih_channel(&u, &IihConfig::default()).unwrap();
        assert_eq!(fast, naive_iih(&u, 3));
    }

    #[test]
    fn iih_rejects_zero_radius() {
        assert!(iih_channel(&ImageGrid::zeros(4, 4), &IihConfig { patch_radius: 0 }).is_err());
    }

    #[test]
    fn rescale_examples() {
        let img = MultiChannelImage::new(
            vec![grid(&[&[2.0, 4.0]]), grid(&[&[0.0, 1.0]]), grid(&[&[3.0, 3.0]])],
            vec![ChannelRole::Gray; 3],
        )
        .unwrap();
        let r = rescale_channels(&img);
        assert_eq!(r.channel(0).as_slice(), &[0.0, 1.0]);
        assert_eq!(r.channel(1).as_slice(), &[0.0, 1.0]);
        assert_eq!(r.channel(2).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn kmeans_two_values() {
        let u = ImageGrid::from_fn(6, 6, |i, _| if i < 3 { 0.1 } else { 0.9 });
        let res = kmeans_threshold(&MultiChannelImage::gray(u.clone()), 2, 1).unwrap();
        let mut c: Vec<f64> = res.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.1, 0.9]);
        assert_eq!(res.wcss, 0.0);
        assert_eq!(res.approx.channel(0), &u);
    }

    #[test]
    fn kmeans_errors() {
        let u = MultiChannelImage::gray(ImageGrid::filled(4, 4, 0.5));
        assert_eq!(
            kmeans_threshold(&u, 2, 0).unwrap_err(),
            Error::TooFewDistinct { k: 2, distinct: 1 }
        );
        assert_eq!(kmeans_threshold(&u, 1, 0).unwrap_err(), Error::InvalidClusterCount(1));
    }

    #[test]
    fn kmeans_is_deterministic_and_nearest() {
        let u = ImageGrid::from_fn(20, 20, |i, j| ((i * 7 + j * 13) % 17) as f64 / 17.0);
        let img = MultiChannelImage::gray(u);
        let a = kmeans_threshold(&img, 4, 42).unwrap();
        let b = kmeans_threshold(&img, 4, 42).unwrap();
        assert_eq!(a, b);
        for p in 0..400 {
            let x = img.pixel(p);
            let own = a.labels.as_slice()[p] as usize - 1;
            let d_own = dist_sq(&x, &a.centroids[own]);
            for c in &a.centroids {
                assert!(d_own <= dist_sq(&x, c));
            }
        }
    }

    #[test]
    fn region_means_reconstruct_piecewise_constant_input() {
        let u = ImageGrid::from_fn(4, 4, |i, _| if i < 2 { 0.3 } else { 0.7 });
        let labels = LabelMap::new(4, 4, (0..16).map(|p| if p < 8 { 1 } else { 2 }).collect()).unwrap();
        let img = MultiChannelImage::gray(u);
        assert_eq!(region_means(&img, &labels).unwrap(), img);
    }

    #[test]
    fn segment_channel_counts() {
        let cfg = SolverConfig::new(10.0, 1.0).with_stopping(1e-3, 50);
        let base = ImageGrid::from_fn(12, 12, |i, j| if (i as f64 - 6.0).hypot(j as f64 - 6.0) < 4.0 { 0.8 } else { 0.2 });
        let gray = MultiChannelImage::gray(base.clone());
        let opts = SegmentOptions {
            use_iih: true,
            ..Default::default()
        };
        let out = segment_detailed(&gray, &BlurKernel::identity(), &cfg, 2, &opts, false).unwrap();
        assert_eq!(out.features.num_channels(), 2);
        assert_eq!(out.result.feature_dim(), 2);

        let rgb = MultiChannelImage::rgb(base.clone(), base.map(|v| 1.0 - v), base.clone()).unwrap();
        let out = segment_detailed(&rgb, &BlurKernel::identity(), &cfg, 2, &SegmentOptions::default(), false).unwrap();
        assert_eq!(out.features.num_channels(), 6);
        assert!(segment(&rgb, &BlurKernel::identity(), &cfg, 2, &opts).is_err());
    }

    #[test]
    fn smoothing_is_per_channel() {
        let cfg = SolverConfig::new(4.0, 1.0).with_stopping(1e-4, 40);
        let r = ImageGrid::from_fn(8, 8, |i, j| ((i + 2 * j) % 5) as f64 / 5.0);
        let g = ImageGrid::filled(8, 8, 0.5);
        let b = r.transposed();
        let img = MultiChannelImage::rgb(r.clone(), g.clone(), b.clone()).unwrap();
        let out = smooth_channels(&img, &BlurKernel::identity(), &cfg).unwrap();
        for (c, src) in [r, g, b].iter().enumerate() {
            let alone = admm_solve(src, &BlurKernel::identity(), &cfg, &mut ()).unwrap().u;
            assert_eq!(out.channel(c), &alone);
        }
        assert_eq!(out.roles(), img.roles());
    }

    proptest! {
        #[test]
        fn iih_in_unit_interval(seed in any::<u64>(), m in 3usize..12, n in 3usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = ImageGrid::from_fn(m, n, |_, _| rng.random::<f64>());
            let out = iih_channel(&u, &IihConfig::new(2).unwrap()).unwrap();
            prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn relabeling_preserves_reconstruction(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = ImageGrid::from_fn(10, 10, |_, _| (rng.random_range(0..4) as f64) / 3.0);
            let img = MultiChannelImage::gray(u);
            let res = kmeans_threshold(&img, 3, seed).unwrap();
            // Swapping label ids and centroids together leaves the image unchanged.
            let swapped: Vec<u32> = res.labels.as_slice().iter().map(|&l| [0, 2, 1, 3][l as usize]).collect();
            let cents = [&res.centroids[1], &res.centroids[0], &res.centroids[2]];
            for (p, &l) in swapped.iter().enumerate() {
                prop_assert_eq!(cents[l as usize - 1][0], res.approx.channel(0).as_slice()[p]);
            }
        }
    }
}
