//! `link3d` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use link3d::scan_io::ScanFormat;

#[derive(Parser, Debug)]
#[command(
    name = "link3d",
    version,
    about = "LiDAR keypoint extraction, description, matching and registration"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Explicit flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Sensor preset: hdl64 or vlp16.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Scan format; guessed from the extension when omitted.
    #[arg(long, global = true, value_parser = parse_format)]
    pub input_format: Option<ScanFormat>,
    /// Anchors per descriptor (1 to 6).
    #[arg(long, global = true)]
    pub k_anchors: Option<usize>,
    /// Minimum similarity score of an emitted match.
    #[arg(long, global = true)]
    pub score_threshold: Option<u32>,
    /// Per-dimension agreement tolerance (m).
    #[arg(long, global = true)]
    pub dim_tolerance: Option<f64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for scene generation and robust estimation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration file with key=value lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the effective configuration to this file.
    #[arg(long, global = true)]
    pub dump_config: Option<PathBuf>,
    /// Pose file whose first row is the true A-to-B motion.
    #[arg(long, global = true)]
    pub ground_truth: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<ScanFormat, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract keypoints and descriptors from one scan.
    Extract {
        input: PathBuf,
        /// Output prefix; writes PREFIX.keypoints.txt, PREFIX.desc and PREFIX.desc.csv.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Match two scans or two descriptor dumps.
    Match {
        input_a: PathBuf,
        input_b: PathBuf,
        /// Output prefix; writes PREFIX.matches.csv and PREFIX.correspondences.csv.
        #[arg(short, long)]
        output: PathBuf,
        /// Residual under the ground-truth pose that counts as an inlier (m).
        #[arg(long, default_value_t = 0.5)]
        inlier_threshold: f64,
    },
    /// Estimate the rigid motion taking scan A into the frame of scan B.
    Register { input_a: PathBuf, input_b: PathBuf },
    /// Time the pipeline stages on a synthetic scan; prints a JSON report.
    Bench {
        /// Approximate points in the synthetic scan.
        #[arg(long, default_value_t = 120_000)]
        points: usize,
        /// Keypoints per set for the matching benchmark.
        #[arg(long, default_value_t = 2000)]
        matching_keypoints: usize,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
    },
    /// Write a synthetic pole scene, optionally with a moved copy.
    Synth {
        output: PathBuf,
        /// Also write the scene seen after the motion given by --yaw and --translation.
        #[arg(long)]
        pair: Option<PathBuf>,
        /// Write the pair's true pose as one row to this file.
        #[arg(long, requires = "pair")]
        pose_out: Option<PathBuf>,
        /// Yaw of the pair's motion (degrees).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw: f64,
        /// Translation of the pair's motion as x,y,z (m).
        #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
        translation: String,
        #[arg(long, default_value_t = 40)]
        poles: usize,
        /// Gaussian range noise (m).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Half-width of the square region holding the poles (m).
        #[arg(long, default_value_t = 15.0)]
        area: f64,
        /// Omit the ground plane.
        #[arg(long)]
        no_ground: bool,
        /// Output format; guessed from the extension when omitted.
        #[arg(long, value_parser = parse_format)]
        output_format: Option<ScanFormat>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::Context::new(&cli.common).and_then(|ctx| match cli.command {
        Command::Extract { input, output } => ctx.extract(&input, &output),
        Command::Match {
            input_a,
            input_b,
            output,
            inlier_threshold,
        } => ctx.match_inputs(&input_a, &input_b, &output, inlier_threshold),
        Command::Register { input_a, input_b } => ctx.register(&input_a, &input_b),
        Command::Bench {
            points,
            matching_keypoints,
            repetitions,
        } => ctx.bench(points, matching_keypoints, repetitions),
        Command::Synth {
            output,
            pair,
            pose_out,
            yaw,
            translation,
            poles,
            noise,
            area,
            no_ground,
            output_format,
        } => ctx.synth(&commands::SynthArgs {
            output,
            pair,
            pose_out,
            yaw,
            translation,
            poles,
            noise,
            area,
            ground: !no_ground,
            output_format,
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
