//! Command-line grammar.

use std::fmt;
use std::path::PathBuf;

use aitvseg::corruption::{make_average_kernel, make_motion_kernel, NoiseKind, NoiseSpec};
use aitvseg::synthetic::{Region, Shape};
use aitvseg::{BlurKernel, Regularizer};
use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aitvseg", version, about = "AITV smoothing-and-thresholding image segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment an image into K regions.
    Segment(SegmentArgs),
    /// Blur and/or add noise to an image.
    Corrupt(CorruptArgs),
    /// Score label maps (DICE) and/or images (PSNR).
    Evaluate(EvaluateArgs),
    /// Run segmentation over a parameter grid and write a CSV.
    Sweep(SweepArgs),
    /// Render a piecewise-constant test image and its ground truth.
    Synthesize(SynthesizeArgs),
    /// Run the solver with full diagnostics and verify its invariants.
    Check(CheckArgs),
}

/// Model and solver flags shared by `segment` and `check`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.6, value_parser = unit_interval)]
    pub alpha: f64,
    /// Initial penalty [default: 1.0 for one smoothed channel, 2.0 otherwise]
    #[arg(long, value_parser = positive)]
    pub delta0: Option<f64>,
    #[arg(long, default_value_t = 1.25, value_parser = at_least_one)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    pub eps: f64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iters: u32,
    /// aitv | tv-aniso | tv-iso | tvp:P
    #[arg(long, default_value = "aitv", value_parser = parse_regularizer)]
    pub regularizer: Regularizer,
    /// Blur operator in the fidelity term: none | average:SIZE | motion:LEN:ANGLE
    #[arg(long, default_value = "none", value_parser = parse_blur)]
    pub blur: BlurSpec,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Number of regions.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=256))]
    pub k: u32,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Append the intensity-inhomogeneity channel (grayscale input only).
    #[arg(long)]
    pub iih: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write per-iteration diagnostics to trace.jsonl.
    #[arg(long)]
    pub trace: bool,
    /// Ground-truth label map; adds DICE to the manifest.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub iih: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// none | average:SIZE | motion:LEN:ANGLE, applied before the noise
    #[arg(long, default_value = "none", value_parser = parse_blur)]
    pub blur: BlurSpec,
    /// none | gaussian:MEAN:VARIANCE | sp:FRACTION | rv:FRACTION
    #[arg(long, default_value = "none", value_parser = parse_noise)]
    pub noise: NoiseArg,
    #[arg(long)]
    pub seed: u64,
    /// Manifest path [default: OUTPUT with a .json extension]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("what").required(true).multiple(true).args(["labels", "image"])))]
pub struct EvaluateArgs {
    /// Predicted label map.
    #[arg(long, requires = "truth")]
    pub labels: Option<PathBuf>,
    /// Ground-truth label map.
    #[arg(long, requires = "labels")]
    pub truth: Option<PathBuf>,
    /// Approximation image.
    #[arg(long, requires = "reference")]
    pub image: Option<PathBuf>,
    /// Reference image.
    #[arg(long, requires = "image")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=256))]
    pub k: u32,
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    pub mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.6", value_parser = unit_interval)]
    pub alpha: Vec<f64>,
    /// [default: 1.0 for one smoothed channel, 2.0 otherwise]
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub delta0: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.25", value_parser = at_least_one)]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    pub eps: f64,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iters: u32,
    #[arg(long, default_value = "aitv", value_parser = parse_regularizer)]
    pub regularizer: Regularizer,
    #[arg(long, default_value = "none", value_parser = parse_blur)]
    pub blur: BlurSpec,
    #[arg(long)]
    pub iih: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path.
    #[arg(long)]
    pub output: PathBuf,
    /// Concurrent grid points [default: AITVSEG_THREADS or the number of CPUs]
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesizeArgs {
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub rows: u32,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub cols: u32,
    /// Background value: V for grayscale or R,G,B, in [0, 1]
    #[arg(long, default_value = "0", value_parser = parse_pixel)]
    pub background: Pixel,
    /// disk:ROW,COL,RADIUS:VALUE | rect:TOP,LEFT,HEIGHT,WIDTH:VALUE |
    /// triangle:R1,C1,R2,C2,R3,C3:VALUE, with VALUE as for --background
    #[arg(long = "region", value_parser = parse_region)]
    pub regions: Vec<Region>,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Manifest path [default: IMAGE with a .json extension]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlurSpec {
    None,
    Average(usize),
    Motion(usize, f64),
}

impl BlurSpec {
    pub fn kernel(&self) -> aitvseg::Result<BlurKernel> {
        match *self {
            BlurSpec::None => Ok(BlurKernel::identity()),
            BlurSpec::Average(size) => make_average_kernel(size),
            BlurSpec::Motion(len, angle) => make_motion_kernel(len, angle),
        }
    }
}

impl fmt::Display for BlurSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlurSpec::None => write!(f, "none"),
            BlurSpec::Average(s) => write!(f, "average:{s}"),
            BlurSpec::Motion(l, a) => write!(f, "motion:{l}:{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseArg {
    None,
    Kind(NoiseKind),
}

impl NoiseArg {
    pub fn spec(&self, seed: u64) -> Option<NoiseSpec> {
        match self {
            NoiseArg::None => None,
            NoiseArg::Kind(kind) => Some(NoiseSpec { kind: *kind, seed }),
        }
    }
}

impl fmt::Display for NoiseArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseArg::None => write!(f, "none"),
            NoiseArg::Kind(NoiseKind::Gaussian { mean, variance }) => write!(f, "gaussian:{mean}:{variance}"),
            NoiseArg::Kind(NoiseKind::SaltPepper { fraction }) => write!(f, "sp:{fraction}"),
            NoiseArg::Kind(NoiseKind::RandomValued { fraction }) => write!(f, "rv:{fraction}"),
        }
    }
}

pub fn regularizer_name(r: &Regularizer) -> String {
    match r {
        Regularizer::Aitv => "aitv".into(),
        Regularizer::AnisotropicTv => "tv-aniso".into(),
        Regularizer::IsotropicTv => "tv-iso".into(),
        Regularizer::Tvp { p } => format!("tvp:{p}"),
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn integer(s: &str) -> Result<usize, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

pub fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

pub fn unit_interval(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} must lie in [0, 1]"))
    }
}

pub fn at_least_one(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be at least 1"))
    }
}

pub fn parse_regularizer(s: &str) -> Result<Regularizer, String> {
    match s {
        "aitv" => Ok(Regularizer::Aitv),
        "tv-aniso" => Ok(Regularizer::AnisotropicTv),
        "tv-iso" => Ok(Regularizer::IsotropicTv),
        _ => match s.strip_prefix("tvp:") {
            Some(p) => {
                let p = number(p)?;
                if p > 0.0 && p < 1.0 {
                    Ok(Regularizer::Tvp { p })
                } else {
                    Err(format!("TVp exponent {p} must lie in (0, 1)"))
                }
            }
            None => Err(format!("unknown regularizer `{s}`; expected aitv, tv-aniso, tv-iso or tvp:P")),
        },
    }
}

pub fn parse_blur(s: &str) -> Result<BlurSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["none"] => Ok(BlurSpec::None),
        ["average", size] => {
            let size = integer(size)?;
            if size % 2 == 1 {
                Ok(BlurSpec::Average(size))
            } else {
                Err(format!("average kernel size {size} must be odd"))
            }
        }
        ["motion", len, angle] => {
            let len = integer(len)?;
            if len == 0 {
                return Err("motion length must be at least 1".into());
            }
            Ok(BlurSpec::Motion(len, number(angle)?))
        }
        _ => Err(format!("unknown blur `{s}`; expected none, average:SIZE or motion:LEN:ANGLE")),
    }
}

pub fn parse_noise(s: &str) -> Result<NoiseArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let fraction = |v: &str| unit_interval(v).map_err(|e| format!("noise fraction: {e}"));
    match parts.as_slice() {
        ["none"] => Ok(NoiseArg::None),
        ["sp", f] => Ok(NoiseArg::Kind(NoiseKind::SaltPepper { fraction: fraction(f)? })),
        ["rv", f] => Ok(NoiseArg::Kind(NoiseKind::RandomValued { fraction: fraction(f)? })),
        ["gaussian", mean, var] => {
            let variance = number(var)?;
            if variance < 0.0 {
                return Err(format!("variance {variance} must be non-negative"));
            }
            Ok(NoiseArg::Kind(NoiseKind::Gaussian {
                mean: number(mean)?,
                variance,
            }))
        }
        _ => Err(format!("unknown noise `{s}`; expected none, gaussian:MEAN:VAR, sp:F or rv:F")),
    }
}

/// `V` or `R,G,B`, each in `[0, 1]`.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let v = s.split(',').map(unit_interval).collect::<Result<Vec<_>, _>>()?;
    if v.len() == 1 || v.len() == 3 {
        Ok(v)
    } else {
        Err(format!("expected 1 or 3 values, got {}", v.len()))
    }
}

/// A gray or RGB value given as one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Pixel(pub Vec<f64>);

pub fn parse_pixel(s: &str) -> Result<Pixel, String> {
    parse_values(s).map(Pixel)
}

pub fn parse_region(s: &str) -> Result<Region, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [kind, geometry, value] = parts.as_slice() else {
        return Err(format!("region `{s}` must look like KIND:GEOMETRY:VALUE"));
    };
    let g = geometry.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
    let shape = match (*kind, g.as_slice()) {
        ("disk", &[r, c, radius]) if radius > 0.0 => Shape::Disk {
            center: (r, c),
            radius,
        },
        ("rect", &[top, left, height, width]) if height > 0.0 && width > 0.0 => Shape::Rect {
            top,
            left,
            height,
            width,
        },
        ("triangle", &[r1, c1, r2, c2, r3, c3]) => Shape::Triangle {
            vertices: [(r1, c1), (r2, c2), (r3, c3)],
        },
        _ => return Err(format!("bad geometry for region `{s}`")),
    };
    Ok(Region {
        shape,
        value: parse_values(value)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grammar_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn blur_specs() {
        assert_eq!(parse_blur("none"), Ok(BlurSpec::None));
        assert_eq!(parse_blur("average:15"), Ok(BlurSpec::Average(15)));
        assert_eq!(parse_blur("motion:5:45"), Ok(BlurSpec::Motion(5, 45.0)));
        assert!(parse_blur("average:4").is_err());
        assert!(parse_blur("gauss:3").is_err());
        for s in ["none", "average:15", "motion:5:45"] {
            assert_eq!(parse_blur(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn noise_specs() {
        assert_eq!(
            parse_noise("sp:0.65"),
            Ok(NoiseArg::Kind(NoiseKind::SaltPepper { fraction: 0.65 }))
        );
        assert!(parse_noise("rv:1.5").is_err());
        assert!(parse_noise("gaussian:0:-1").is_err());
        assert_eq!(parse_noise("gaussian:0:0.001").unwrap().to_string(), "gaussian:0:0.001");
    }

    #[test]
    fn regularizers() {
        assert_eq!(parse_regularizer("tvp:0.5"), Ok(Regularizer::Tvp { p: 0.5 }));
        assert!(parse_regularizer("tvp:1").is_err());
        for s in ["aitv", "tv-aniso", "tv-iso", "tvp:0.5"] {
            assert_eq!(regularizer_name(&parse_regularizer(s).unwrap()), s);
        }
    }

    #[test]
    fn regions() {
        let r = parse_region("disk:10,12,5:0.8").unwrap();
        assert_eq!(r.value, vec![0.8]);
        let r = parse_region("rect:0,0,4,4:0.5,0.9,0.25").unwrap();
        assert_eq!(r.value.len(), 3);
        assert!(parse_region("disk:1,2:0.5").is_err());
        assert!(parse_region("disk:1,2,3:1.5").is_err());
        assert!(parse_region("disk:1,2,3:0.1,0.2").is_err());
    }

    #[test]
    fn synthesize_parses() {
        let cli = Cli::try_parse_from([
            "aitvseg", "synthesize", "--background", "0.1,0.2,0.3", "--region", "disk:4,4,2:0.5,0.5,0.5",
            "--region", "rect:0,0,2,2:1,1,1", "--image", "a.png", "--labels", "b.png",
        ])
        .unwrap();
        let Command::Synthesize(a) = cli.command else { panic!("wrong command") };
        assert_eq!(a.background, Pixel(vec![0.1, 0.2, 0.3]));
        assert_eq!(a.regions.len(), 2);
    }

    #[test]
    fn sweep_lists_parse() {
        let cli = Cli::try_parse_from([
            "aitvseg", "sweep", "--input", "x.png", "--k", "2", "--lambda", "1,2", "--mu", "0.5", "--output", "s.csv",
        ])
        .unwrap();
        let Command::Sweep(a) = cli.command else { panic!("wrong command") };
        assert_eq!(a.lambda, vec![1.0, 2.0]);
        assert_eq!(a.sigma, vec![1.25]);
        assert!(a.delta0.is_empty());
    }

    #[test]
    fn range_checks() {
        assert!(unit_interval("1.5").is_err());
        assert!(positive("0").is_err());
        assert!(at_least_one("0.9").is_err());
        assert!(positive("nan").is_err());
    }
}
