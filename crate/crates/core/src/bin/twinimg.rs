use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twinimg::correlation::{AnalysisOptions, DEFAULT_SNR_FRAMES};
use twinimg::detector::Camera;
use twinimg::pipeline::{self, frame_file_name};
use twinimg::{PlaneKind, RunConfig};

const DEFAULT_OUT: &str = "twinimg-out";

#[derive(Parser)]
#[command(
    name = "twinimg",
    version,
    about = "Simulate and analyze twin-camera photon-pair images"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "TWINIMG_OUT_DIR", default_value = DEFAULT_OUT)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw frames for one or both planes and write them as frame files.
    Simulate {
        /// Run configuration file (key = value lines); defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plane to simulate; both when absent.
        #[arg(long, value_parser = ["near", "far"])]
        plane: Option<String>,
        /// Override the number of frame pairs.
        #[arg(long)]
        frames: Option<usize>,
        /// Override the random seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Threshold, correlate and fit both planes, then write the report, maps and SNR curve.
    Analyze {
        /// Camera 1 and camera 2 near-field frame files [default: <input>/near_cam{1,2}.twim].
        #[arg(long, num_args = 2, value_names = ["CAM1", "CAM2"])]
        near: Option<Vec<PathBuf>>,
        /// Camera 1 and camera 2 far-field frame files [default: <input>/far_cam{1,2}.twim].
        #[arg(long, num_args = 2, value_names = ["CAM1", "CAM2"])]
        far: Option<Vec<PathBuf>>,
        /// Directory holding the default frame files [default: the output directory].
        #[arg(long)]
        input: Option<PathBuf>,
        /// Block size in pixels for the detection statistic.
        #[arg(long, default_value_t = 8)]
        grouping: usize,
        /// Frame counts at which the SNR curve is evaluated.
        #[arg(long, value_delimiter = ',')]
        snr_frames: Option<Vec<usize>>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print a summary of a report; exits 0 only if both axes violate the bound.
    Report {
        /// Path to report.json.
        report: PathBuf,
    },
}

fn frame_pair(explicit: Option<Vec<PathBuf>>, dir: &Path, plane: PlaneKind) -> [PathBuf; 2] {
    match explicit {
        Some(v) => [v[0].clone(), v[1].clone()],
        None => [Camera::One, Camera::Two].map(|c| dir.join(frame_file_name(plane, c))),
    }
}

fn run(cli: Cli) -> twinimg::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| twinimg::Error::InvalidParameter(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate {
            config,
            plane,
            frames,
            seed,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            if let Some(f) = frames {
                cfg.source.frames = f;
            }
            if let Some(s) = seed {
                cfg.source.seed = s;
            }
            cfg.validate()?;
            print!("{}", cfg.echo());
            let planes = match plane.as_deref() {
                Some(p) => vec![p.parse::<PlaneKind>()?],
                None => vec![PlaneKind::NearField, PlaneKind::FarField],
            };
            for p in planes {
                let paths = pipeline::simulate_to_files(&cfg, p, &out.out)?;
                for path in paths {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            near,
            far,
            input,
            grouping,
            snr_frames,
            out,
        } => {
            let dir = input.unwrap_or_else(|| out.out.clone());
            let near = frame_pair(near, &dir, PlaneKind::NearField);
            let far = frame_pair(far, &dir, PlaneKind::FarField);
            let opts = AnalysisOptions {
                snr_grouping: grouping,
                snr_frames: snr_frames.unwrap_or_else(|| DEFAULT_SNR_FRAMES.to_vec()),
                ..AnalysisOptions::default()
            };
            println!("# analysis");
            println!("grouping = {}", opts.snr_grouping);
            let list: Vec<String> = opts.snr_frames.iter().map(usize::to_string).collect();
            println!("snr_frames = {}", list.join(","));
            println!("half_window = {}", opts.half_window);
            println!("bootstrap_blocks = {}", opts.bootstrap_blocks);
            println!("bootstrap_resamples = {}", opts.bootstrap_resamples);
            println!("bootstrap_seed = {}", opts.bootstrap_seed);
            let result = pipeline::analyze([&near[0], &near[1]], [&far[0], &far[1]], &opts)?;
            for s in [&result.sidecars.near, &result.sidecars.far] {
                println!("# {} field frames: config digest {}", s.plane, s.config_digest);
            }
            for path in pipeline::write_outputs(&result, &out.out)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { report } => {
            let r = twinimg::io::read_report(&report)?;
            print!("{}", pipeline::summarize(&r));
            Ok(if r.both_violated() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
