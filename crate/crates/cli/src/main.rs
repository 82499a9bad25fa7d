//! `dseg` command-line front end.
//!
//! Exit status: 0 on success, 2 when an input cannot be read or decoded,
//! 3 for invalid parameters and 4 when a segment file does not follow the
//! expected schema.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dseg::evaluation::{add_noise, match_segments, TAU_DIST};
use dseg::{
    detect, detect_hierarchical, DetectorParams, Error, HierarchicalParams, MatchReport, Segment,
};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "dseg",
    version,
    about = "Line segment detection driven by a Kalman filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect segments on a single image.
    Detect(DetectArgs),
    /// Detect segments coarse-to-fine over an image pyramid.
    Hdetect {
        #[command(flatten)]
        detect: DetectArgs,
        /// Number of pyramid levels, full resolution included.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Scale factor between consecutive levels.
        #[arg(long, default_value_t = 2.0)]
        scale: f64,
    },
    /// Repeatability under increasing synthetic noise, written as CSV.
    BenchNoise {
        #[arg(long)]
        input: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Highest noise index; frames 0..=N are processed.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Compare two segment files.
    Match {
        /// Reference segments (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Current segments (JSON).
        #[arg(long)]
        current: PathBuf,
        /// Report destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Segment JSON destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG overlay of the result.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Segments shorter than this are left out of the overlay.
    #[arg(long, default_value_t = 0.0)]
    min_length: f64,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    tau_gmax: Option<f64>,
    #[arg(long)]
    tau_angle: Option<f64>,
    #[arg(long)]
    delta_t: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long)]
    n_o: Option<usize>,
}

impl ParamArgs {
    fn resolve(&self) -> DetectorParams {
        let mut p = DetectorParams::default();
        if let Some(v) = self.tau_gmax {
            p.tau_gmax = v;
        }
        if let Some(v) = self.tau_angle {
            p.tau_angle = v;
        }
        if let Some(v) = self.delta_t {
            p.delta_t = v;
        }
        if let Some(v) = self.sigma_r {
            p.sigma_r = v;
        }
        if let Some(v) = self.n_o {
            p.n_o = v;
        }
        p
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn at(path: &Path, err: Error) -> Self {
        let code = match err {
            Error::InvalidConfiguration(_) | Error::InvalidArgument(_) => 3,
            Error::Schema(_) | Error::Json(_) => 4,
            _ => 2,
        };
        Self::new(code, format!("{}: {err}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::at(Path::new("dseg"), err)
    }
}

type Outcome = Result<(), Failure>;

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::new(2, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_detect(args: &DetectArgs, hierarchy: Option<(usize, f64)>) -> Outcome {
    let base = args.params.resolve();
    let params = HierarchicalParams {
        base,
        levels: hierarchy.map_or(1, |h| h.0),
        scale: hierarchy.map_or(2.0, |h| h.1),
    };
    params.validate()?;
    let image = dseg::io::load_image(&args.input).map_err(|e| Failure::at(&args.input, e))?;
    let segments = match hierarchy {
        Some(_) => detect_hierarchical(&image, &params),
        None => detect(&image, &base),
    }
    .map_err(|e| Failure::at(&args.input, e))?;
    let json = dseg::io::segments_to_json(&segments)?;
    write_output(args.out.as_deref(), &(json + "\n"))?;
    if let Some(path) = &args.render {
        let svg = render::svg_overlay(&image, &segments, args.min_length)?;
        write_output(Some(path), &svg)?;
    }
    Ok(())
}

fn run_bench_noise(
    input: &Path,
    out: Option<&Path>,
    frames: usize,
    seed: u64,
    params: &ParamArgs,
) -> Outcome {
    if frames < 1 {
        return Err(Failure::new(3, "--frames must be at least 1"));
    }
    let params = params.resolve();
    params.validate()?;
    let image = dseg::io::load_image(input).map_err(|e| Failure::at(input, e))?;
    let detections: Vec<Vec<Segment>> = (0..=frames)
        .into_par_iter()
        .map(|i| detect(&add_noise(&image, i, seed), &params))
        .collect::<dseg::Result<_>>()
        .map_err(|e| Failure::at(input, e))?;
    let mut csv = String::from(MatchReport::CSV_HEADER);
    csv.push('\n');
    for (i, current) in detections.iter().enumerate() {
        let report = match_segments(&detections[0], current, TAU_DIST)?;
        csv.push_str(&report.csv_row(i));
        csv.push('\n');
    }
    write_output(out, &csv)
}

fn run_match(reference: &Path, current: &Path, out: Option<&Path>) -> Outcome {
    let load = |p: &Path| -> Result<Vec<Segment>, Failure> {
        let text =
            fs::read_to_string(p).map_err(|e| Failure::new(2, format!("{}: {e}", p.display())))?;
        dseg::io::segments_from_json(&text).map_err(|e| Failure::at(p, e))
    };
    let report = match_segments(&load(reference)?, &load(current)?, TAU_DIST)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::new(2, e.to_string()))?;
    write_output(out, &(text + "\n"))
}

fn configure_threads() -> Outcome {
    let Ok(value) = std::env::var("DSEG_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Failure::new(
                3,
                format!("DSEG_THREADS must be a positive integer, got {value:?}"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::new(3, e.to_string()))
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match &cli.command {
        Command::Detect(args) => run_detect(args, None),
        Command::Hdetect {
            detect,
            levels,
            scale,
        } => run_detect(detect, Some((*levels, *scale))),
        Command::BenchNoise {
            input,
            out,
            frames,
            seed,
            params,
        } => run_bench_noise(input, out.as_deref(), *frames, *seed, params),
        Command::Match {
            input,
            current,
            out,
        } => run_match(input, current, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dseg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
