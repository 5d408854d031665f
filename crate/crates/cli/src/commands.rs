//! Subcommand implementations. Each returns what it wrote so tests can
//! inspect results without re-reading files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aitvseg::admm::{energy, verify_invariants, Violation};
use aitvseg::corruption::{add_noise, blur_image};
use aitvseg::metrics::DiceReport;
use aitvseg::pipeline::{iih_channel, segment_detailed, smooth_channels_detailed, IihConfig, SegmentOutput};
use aitvseg::synthetic::Scene;
use aitvseg::{dice, psnr, BlurKernel, ChannelRole, LabelMap, MultiChannelImage, SegmentOptions, SolverConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CheckArgs, CorruptArgs, EvaluateArgs, SegmentArgs, SolverArgs, SweepArgs, SynthesizeArgs};
use crate::io::{read_image, read_labels, write_image, write_labels};
use crate::manifest::{format_metric, ChannelReport, CorruptionParams, Manifest, Metrics, SegmentationParams};
use crate::CliError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Initial penalty when none is given: 1.0 for a single smoothed channel,
/// 2.0 when several channels (color or gray plus IIH) are smoothed.
pub fn default_delta0(smoothed_channels: usize) -> f64 {
    if smoothed_channels > 1 {
        2.0
    } else {
        1.0
    }
}

fn smoothed_channels(image: &MultiChannelImage, use_iih: bool) -> usize {
    image.num_channels() + usize::from(use_iih)
}

pub fn solver_config(args: &SolverArgs, smoothed_channels: usize) -> SolverConfig {
    SolverConfig::new(args.lambda, args.mu)
        .with_alpha(args.alpha)
        .with_penalty(args.delta0.unwrap_or(default_delta0(smoothed_channels)), args.sigma)
        .with_stopping(args.eps, args.max_iters as usize)
        .with_regularizer(args.regularizer)
}

/// One segmentation with everything the manifest and the sweep report.
pub struct SegmentRun {
    pub output: SegmentOutput,
    pub channels: Vec<ChannelReport>,
    pub psnr: f64,
    pub dice: Option<DiceReport>,
    pub seconds: f64,
}

impl SegmentRun {
    pub fn iterations(&self) -> usize {
        self.channels.iter().map(|c| c.iterations).max().unwrap_or(0)
    }

    pub fn converged(&self) -> bool {
        self.channels.iter().all(|c| c.converged)
    }

    pub fn final_energy(&self) -> f64 {
        self.channels.iter().map(|c| c.final_energy).sum()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            iterations: Some(self.iterations()),
            final_energy: Some(self.final_energy()),
            wcss: Some(self.output.result.wcss),
            psnr: Some(self.psnr),
            dice_mean: self.dice.as_ref().map(|d| d.mean),
            dice_foreground: self.dice.as_ref().map(|d| d.foreground_mean),
            dice_per_label: self.dice.as_ref().map(|d| d.per_label.clone()),
        }
    }
}

pub fn run_segmentation(
    image: &MultiChannelImage,
    truth: Option<&LabelMap>,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    k: usize,
    options: &SegmentOptions,
    diagnostics: bool,
) -> Result<SegmentRun, CliError> {
    let start = Instant::now();
    let output = segment_detailed(image, kernel, cfg, k, options, diagnostics)?;
    let inputs = &output.smoothing_input;
    let channels = output
        .solves
        .iter()
        .zip(inputs.channels().iter().zip(inputs.roles()))
        .map(|(solve, (f, &role))| {
            Ok(ChannelReport {
                role,
                iterations: solve.iterations,
                converged: solve.converged,
                final_energy: energy(&solve.u, f, kernel, cfg)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let psnr = psnr(image, &output.region_means)?;
    let dice = truth.map(|t| dice(t, &output.result.labels)).transpose()?;
    Ok(SegmentRun {
        output,
        channels,
        psnr,
        dice,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize)]
struct TraceRecord {
    channel: usize,
    role: ChannelRole,
    iter: usize,
    delta: f64,
    rel_change: f64,
    energy: Option<f64>,
    lagrangian: Option<f64>,
    z_inf: f64,
    primal_residual: f64,
}

fn write_trace(path: &Path, output: &SegmentOutput) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    for (channel, (solve, &role)) in output.solves.iter().zip(output.smoothing_input.roles()).enumerate() {
        for d in &solve.trace {
            let record = TraceRecord {
                channel,
                role,
                iter: d.iter,
                delta: d.delta,
                rel_change: d.rel_change,
                energy: d.energy,
                lagrangian: d.lagrangian,
                z_inf: d.z_inf_norm,
                primal_residual: d.primal_residual,
            };
            let line = serde_json::to_string(&record).expect("trace record is serializable");
            writeln!(w, "{line}").map_err(|e| io_error(path, e))?;
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let image = read_image(&args.input)?;
    let truth = args.truth.as_deref().map(read_labels).transpose()?;
    let kernel = args.solver.blur.kernel()?;
    let cfg = solver_config(&args.solver, smoothed_channels(&image, args.iih));
    let options = SegmentOptions {
        use_iih: args.iih,
        seed: args.seed,
        iih: IihConfig::default(),
    };
    let run = run_segmentation(&image, truth.as_ref(), &kernel, &cfg, args.k as usize, &options, args.trace)?;

    let dir = &args.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let labels_path = dir.join("labels.png");
    let approx_path = dir.join("approx.png");
    let manifest_path = dir.join("manifest.json");
    write_labels(&labels_path, &run.output.result.labels)?;
    write_image(&approx_path, &run.output.region_means)?;

    let mut manifest = Manifest::new("segment")
        .input("image", &args.input)
        .output("labels", &labels_path)
        .output("approx", &approx_path)
        .output("manifest", &manifest_path);
    if let Some(t) = &args.truth {
        manifest = manifest.input("truth", t);
    }
    if args.trace {
        let trace_path = dir.join("trace.jsonl");
        write_trace(&trace_path, &run.output)?;
        manifest = manifest.output("trace", &trace_path);
    }
    manifest.segmentation = Some(SegmentationParams {
        k: args.k as usize,
        seed: args.seed,
        use_iih: args.iih,
        iih_patch_radius: options.iih.patch_radius,
        blur: args.solver.blur.to_string(),
        solver: cfg,
    });
    manifest.metrics = Some(run.metrics());
    manifest.channels = run.channels;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

fn sidecar(path: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| path.with_extension("json"))
}

pub fn cmd_corrupt(args: &CorruptArgs) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let image = read_image(&args.input)?;
    let kernel = args.blur.kernel()?;
    let blurred = if kernel.is_identity() {
        image
    } else {
        blur_image(&image, &kernel)?
    };
    let corrupted = match args.noise.spec(args.seed) {
        Some(spec) => add_noise(&blurred, &spec)?,
        None => blurred,
    };
    write_image(&args.output, &corrupted)?;
    let manifest_path = sidecar(&args.output, args.manifest.as_ref());
    let mut manifest = Manifest::new("corrupt")
        .input("image", &args.input)
        .output("image", &args.output)
        .output("manifest", &manifest_path);
    manifest.corruption = Some(CorruptionParams {
        blur: args.blur.to_string(),
        noise: args.noise.to_string(),
        seed: args.seed,
    });
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Metrics, CliError> {
    let mut metrics = Metrics::default();
    if let (Some(labels), Some(truth)) = (&args.labels, &args.truth) {
        let report = dice(&read_labels(truth)?, &read_labels(labels)?)?;
        metrics.dice_mean = Some(report.mean);
        metrics.dice_foreground = Some(report.foreground_mean);
        metrics.dice_per_label = Some(report.per_label);
    }
    if let (Some(image), Some(reference)) = (&args.image, &args.reference) {
        metrics.psnr = Some(psnr(&read_image(reference)?, &read_image(image)?)?);
    }
    Ok(metrics)
}

/// The JSON record followed by a two-line table.
pub fn evaluation_report(metrics: &Metrics) -> String {
    let json = serde_json::to_string(metrics).expect("metrics are serializable");
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), format_metric);
    format!(
        "{json}\n{:<12}{:<12}\n{:<12}{:<12}\n",
        "dice",
        "psnr",
        show(metrics.dice_mean),
        show(metrics.psnr)
    )
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Metrics, CliError> {
    let metrics = evaluate(args)?;
    print!("{}", evaluation_report(&metrics));
    Ok(metrics)
}

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub delta0: f64,
    pub sigma: f64,
}

/// Cartesian product in lexicographic order of (lambda, mu, alpha, delta0, sigma).
pub fn sweep_grid(args: &SweepArgs, smoothed_channels: usize) -> Vec<SweepPoint> {
    let delta0 = if args.delta0.is_empty() {
        vec![default_delta0(smoothed_channels)]
    } else {
        args.delta0.clone()
    };
    let mut grid = Vec::new();
    for &lambda in &args.lambda {
        for &mu in &args.mu {
            for &alpha in &args.alpha {
                for &d0 in &delta0 {
                    for &sigma in &args.sigma {
                        grid.push(SweepPoint {
                            lambda,
                            mu,
                            alpha,
                            delta0: d0,
                            sigma,
                        });
                    }
                }
            }
        }
    }
    grid
}

pub const SWEEP_HEADER: [&str; 12] = [
    "lambda",
    "mu",
    "alpha",
    "delta0",
    "sigma",
    "iterations",
    "converged",
    "final_energy",
    "psnr",
    "dice_mean",
    "dice_foreground",
    "wall_time_seconds",
];

pub fn cmd_sweep(args: &SweepArgs) -> Result<usize, CliError> {
    let image = read_image(&args.input)?;
    let truth = args.truth.as_deref().map(read_labels).transpose()?;
    let kernel = args.blur.kernel()?;
    let grid = sweep_grid(args, smoothed_channels(&image, args.iih));
    let options = SegmentOptions {
        use_iih: args.iih,
        seed: args.seed,
        iih: IihConfig::default(),
    };
    let jobs = args
        .jobs
        .map(|j| j as usize)
        .or_else(crate::threads_from_env)
        .unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let runs: Vec<Result<Vec<String>, CliError>> = pool.install(|| {
        grid.par_iter()
            .map(|p| {
                let cfg = SolverConfig::new(p.lambda, p.mu)
                    .with_alpha(p.alpha)
                    .with_penalty(p.delta0, p.sigma)
                    .with_stopping(args.eps, args.max_iters as usize)
                    .with_regularizer(args.regularizer);
                let run = run_segmentation(&image, truth.as_ref(), &kernel, &cfg, args.k as usize, &options, false)?;
                Ok(vec![
                    p.lambda.to_string(),
                    p.mu.to_string(),
                    p.alpha.to_string(),
                    p.delta0.to_string(),
                    p.sigma.to_string(),
                    run.iterations().to_string(),
                    run.converged().to_string(),
                    run.final_energy().to_string(),
                    run.psnr.to_string(),
                    run.dice.as_ref().map_or_else(String::new, |d| d.mean.to_string()),
                    run.dice.as_ref().map_or_else(String::new, |d| d.foreground_mean.to_string()),
                    run.seconds.to_string(),
                ])
            })
            .collect()
    });

    let path = &args.output;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(SWEEP_HEADER).map_err(|e| io_error(path, e))?;
    for row in runs {
        w.write_record(row?).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))?;
    Ok(grid.len())
}

pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let scene = Scene {
        rows: args.rows as usize,
        cols: args.cols as usize,
        background: args.background.0.clone(),
        regions: args.regions.clone(),
    };
    let (image, labels) = scene.render()?;
    write_image(&args.image, &image)?;
    write_labels(&args.labels, &labels)?;
    let manifest_path = sidecar(&args.image, args.manifest.as_ref());
    let mut manifest = Manifest::new("synthesize")
        .output("image", &args.image)
        .output("labels", &args.labels)
        .output("manifest", &manifest_path);
    manifest.scene = Some(scene);
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

/// Invariant check results for one smoothed channel.
#[derive(Clone, Debug)]
pub struct ChannelCheck {
    pub role: ChannelRole,
    pub iterations: usize,
    pub converged: bool,
    pub violations: Vec<Violation>,
}

/// Solves every channel with full diagnostics and verifies the convergence
/// invariants at every iteration.
pub fn check_image(
    image: &MultiChannelImage,
    kernel: &BlurKernel,
    cfg: &SolverConfig,
    use_iih: bool,
) -> Result<Vec<ChannelCheck>, CliError> {
    cfg.validate()?;
    let input = if use_iih {
        if image.roles() != [ChannelRole::Gray] {
            return Err(aitvseg::Error::InvalidConfig("the IIH channel is defined for grayscale input only".into()).into());
        }
        let iih = iih_channel(image.channel(0), &IihConfig::default())?;
        MultiChannelImage::new(
            vec![image.channel(0).clone(), iih],
            vec![ChannelRole::Gray, ChannelRole::Iih],
        )?
    } else {
        image.clone()
    };
    let solves = smooth_channels_detailed(&input, kernel, cfg, true)?;
    solves
        .iter()
        .zip(input.roles())
        .map(|(solve, &role)| {
            Ok(ChannelCheck {
                role,
                iterations: solve.iterations,
                converged: solve.converged,
                violations: verify_invariants(solve, cfg)?,
            })
        })
        .collect()
}

fn role_name(role: ChannelRole) -> String {
    serde_json::to_value(role)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{role:?}"))
}

pub fn cmd_check(args: &CheckArgs) -> Result<Vec<ChannelCheck>, CliError> {
    let image = read_image(&args.input)?;
    let kernel = args.solver.blur.kernel()?;
    let cfg = solver_config(&args.solver, smoothed_channels(&image, args.iih));
    let checks = check_image(&image, &kernel, &cfg, args.iih)?;
    let mut failures = Vec::new();
    for c in &checks {
        let name = role_name(c.role);
        println!(
            "{name}: {} iterations, {}, {} violations",
            c.iterations,
            if c.converged { "converged" } else { "not converged" },
            c.violations.len()
        );
        failures.extend(c.violations.iter().map(|v| format!("{name}: {v}")));
    }
    if failures.is_empty() {
        println!("all invariants hold");
        Ok(checks)
    } else {
        Err(CliError::Invariants(failures.join("\n")))
    }
}
