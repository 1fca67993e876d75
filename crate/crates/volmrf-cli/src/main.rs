//! `volmrf` command line: refine probability volumes into label volumes,
//! decode argmax labelings, upsample probability maps, score segmentations,
//! and generate synthetic phantoms.
//!
//! Exit codes: 0 success, 2 usage error, 3 format/validation error,
//! 4 shape mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use volmrf::energy::{EnergyParams, Sigma};
use volmrf::expansion::{optimize, MoveRecord, DEFAULT_MAX_SWEEPS};
use volmrf::grid::Dims;
use volmrf::io;
use volmrf::metrics::score_all;
use volmrf::phantom::{make_phantom, PhantomSpec, SphereSpec};
use volmrf::volume::{argmax_labeling, upsample_bilinear};
use volmrf::Error;

#[derive(Parser)]
#[command(
    name = "volmrf",
    version,
    about = "Refine per-voxel class probability volumes into spatially homogeneous label volumes and score segmentations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the MRF energy of a probability/intensity volume pair
    Refine(RefineArgs),
    /// Decode the per-voxel argmax labeling of a probability volume
    Argmax(ArgmaxArgs),
    /// Bilinearly upsample each slice of a probability volume
    Upsample(UpsampleArgs),
    /// Score a predicted labeling against ground truth, emitting CSV
    Evaluate(EvaluateArgs),
    /// Generate a synthetic phantom: ground truth, prior, and intensity
    Phantom(PhantomArgs),
}

#[derive(Args)]
struct RefineArgs {
    /// Probability volume (f32le, channels >= 2)
    #[arg(long)]
    prob: PathBuf,
    /// Intensity volume matching the probability grid
    #[arg(long)]
    intensity: PathBuf,
    /// Output label volume
    #[arg(long)]
    out: PathBuf,
    /// Pairwise weight of the smoothing term
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Contrast scale: a positive number or "auto"
    #[arg(long, default_value = "auto", value_parser = parse_sigma)]
    sigma: Sigma,
    /// Probability clamp inside the log
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    /// Sweep cap for the expansion loop
    #[arg(long, default_value_t = DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    /// Optional JSON run report (energies, sweeps, wall time)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ArgmaxArgs {
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UpsampleArgs {
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Integer upsampling factor per slice
    #[arg(long, default_value_t = 4)]
    factor: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted label volume
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label volume
    #[arg(long)]
    gt: PathBuf,
    /// Labels to score, comma separated; defaults to every non-background
    /// label present in the ground truth
    #[arg(long, value_parser = parse_labels)]
    labels: Option<std::vec::Vec<u16>>,
    /// Voxel spacing override in mm, e.g. 1,1,1.3; defaults to the
    /// ground-truth header spacing
    #[arg(long, value_parser = parse_f64_triple)]
    spacing: Option<[f64; 3]>,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// Output path for the ground-truth label volume
    #[arg(long)]
    gt: PathBuf,
    /// Output path for the probability volume
    #[arg(long)]
    prob: PathBuf,
    /// Output path for the intensity volume
    #[arg(long)]
    intensity: PathBuf,
    /// RNG seed; the whole phantom is a pure function of it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid extent, e.g. 32,32,32
    #[arg(long, default_value = "32,32,32", value_parser = parse_usize_triple)]
    dims: [usize; 3],
    /// Voxel spacing in mm
    #[arg(long, default_value = "1,1,1", value_parser = parse_f64_triple)]
    spacing: [f64; 3],
    /// Spheres as cx,cy,cz,r groups separated by semicolons; sphere k
    /// produces label k+1
    #[arg(long, default_value = "11,11,11,7;21,21,21,6", value_parser = parse_spheres)]
    spheres: std::vec::Vec<SphereSpec>,
    /// Prior corruption level in [0, 1)
    #[arg(long, default_value_t = 0.4)]
    eta: f64,
    /// Intensity step between structure means
    #[arg(long, default_value_t = 100.0)]
    contrast: f64,
    /// Intensity noise amplitude
    #[arg(long, default_value_t = 5.0)]
    noise: f64,
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Sigma::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(format!("sigma must be positive, got {v}"));
    }
    Ok(Sigma::Fixed(v))
}

fn parse_labels(s: &str) -> Result<Vec<u16>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<u16>()
                .map_err(|_| format!("bad label {part:?}"))
        })
        .collect()
}

fn parse_f64_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|v| format!("expected 3 values, got {}", v.len()))
}

fn parse_usize_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad count {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|v| format!("expected 3 values, got {}", v.len()))
}

fn parse_spheres(s: &str) -> Result<Vec<SphereSpec>, String> {
    s.split(';')
        .map(|group| {
            let nums: Vec<f64> = group
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad number {p:?}"))
                })
                .collect::<Result<_, _>>()?;
            if nums.len() != 4 {
                return Err(format!("sphere {group:?} needs cx,cy,cz,r"));
            }
            Ok(SphereSpec {
                center: [nums[0], nums[1], nums[2]],
                radius: nums[3],
            })
        })
        .collect()
}

/// JSON run report written by `refine --report`.
#[derive(Serialize)]
struct RunReport<'a> {
    initial_energy: f64,
    final_energy: f64,
    sweeps_executed: usize,
    converged: bool,
    wall_time_ms: f64,
    moves: &'a [MoveRecord],
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) => 2,
        Error::Shape(_) | Error::OutOfBounds { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Refine(args) => refine(args),
        Command::Argmax(args) => argmax(args),
        Command::Upsample(args) => upsample(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Phantom(args) => phantom(args),
    }
}

fn refine(args: RefineArgs) -> Result<(), Error> {
    let prob = io::read_probability(&args.prob)?;
    let intensity = io::read_intensity(&args.intensity)?;
    let params = EnergyParams::new(args.lambda, args.sigma, args.epsilon, prob.channels())?;

    let start = Instant::now();
    let (labels, report) = optimize(&prob, &intensity, &params, args.max_sweeps)?;
    let wall = start.elapsed();

    io::write_labels(&labels, &args.out)?;
    if let Some(path) = &args.report {
        let run = RunReport {
            initial_energy: report.initial_energy,
            final_energy: report.final_energy,
            sweeps_executed: report.sweeps_executed,
            converged: report.converged,
            wall_time_ms: wall.as_secs_f64() * 1e3,
            moves: &report.trace,
        };
        let json = serde_json::to_string_pretty(&run).expect("report serialization cannot fail");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    }
    println!(
        "energy {:.6} -> {:.6} in {} sweep(s), converged: {}, {:.1} ms",
        report.initial_energy,
        report.final_energy,
        report.sweeps_executed,
        report.converged,
        wall.as_secs_f64() * 1e3
    );
    Ok(())
}

fn argmax(args: ArgmaxArgs) -> Result<(), Error> {
    let prob = io::read_probability(&args.prob)?;
    io::write_labels(&argmax_labeling(&prob), &args.out)
}

fn upsample(args: UpsampleArgs) -> Result<(), Error> {
    let prob = io::read_probability(&args.prob)?;
    let up = upsample_bilinear(&prob, args.factor)?;
    io::write_probability(&up, &args.out)
}

fn evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let pred = io::read_labels(&args.pred)?;
    let gt = io::read_labels(&args.gt)?;
    let spacing = args.spacing.unwrap_or_else(|| gt.dims().spacing_mm());
    let labels = match args.labels {
        Some(l) => l,
        None => gt
            .distinct_labels()
            .into_iter()
            .filter(|&l| l != 0)
            .collect(),
    };
    let scores = score_all(&pred, &gt, &labels, spacing)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            io::write_scores_csv(&scores, std::io::BufWriter::new(file))
                .map_err(|e| Error::io(path, e))?;
        }
        None => {
            io::write_scores_csv(&scores, std::io::stdout().lock())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn phantom(args: PhantomArgs) -> Result<(), Error> {
    let spec = PhantomSpec {
        dims: Dims::new(args.dims[0], args.dims[1], args.dims[2], args.spacing)?,
        structures: args.spheres,
        eta: args.eta,
        contrast: args.contrast,
        noise_amp: args.noise,
        seed: args.seed,
    };
    let (gt, prob, intensity) = make_phantom(&spec)?;
    io::write_labels(&gt, &args.gt)?;
    io::write_probability(&prob, &args.prob)?;
    io::write_intensity(&intensity, &args.intensity)?;
    println!(
        "phantom {}x{}x{} with {} structure(s), seed {}",
        args.dims[0],
        args.dims[1],
        args.dims[2],
        spec.structures.len(),
        args.seed
    );
    Ok(())
}
