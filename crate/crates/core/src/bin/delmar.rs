use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use delmar::admm::{AdmmConfig, UpdateMode};
use delmar::io::{matrix_digest, read_matrix, write_matrix, RunReport, WallTimes};
use delmar::mbp::backpropagate;
use delmar::metrics::{compare_features, split_half_reproducibility, Threshold};
use delmar::pipeline::{decompose_forward, reconstruction_errors, DecomposeOptions};
use delmar::synth::{generate, SynthSpec};
use delmar::{DelmarError, Matrix};

/// Deep linear matrix factorization with automatic depth discovery.
#[derive(Parser)]
#[command(name = "delmar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a matrix and write per-layer factors plus report.json.
    Decompose(DecomposeArgs),
    /// Generate a synthetic hierarchy with its ground truth.
    Synth(SynthArgs),
    /// Compare feature rows against template rows.
    Metrics(MetricsArgs),
    /// Split-half reproducibility of the first-layer features.
    Reproducibility(ReproArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Accelerated,
}

#[derive(Args)]
struct SolverArgs {
    /// Rank of the first layer [default: round(min(rows, cols) / 4)]
    #[arg(long)]
    initial_rank: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.6)]
    eta: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 8)]
    max_layers: usize,
    #[arg(long, value_enum, default_value_t = Mode::Accelerated)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of backpropagation sweeps; 0 disables refinement.
    #[arg(long, default_value_t = 1)]
    mbp: usize,
}

impl SolverArgs {
    fn config(&self) -> AdmmConfig {
        AdmmConfig {
            beta: self.beta,
            eta: self.eta,
            max_iter: self.max_iter,
            tol: self.tol,
            mode: match self.mode {
                Mode::Exact => UpdateMode::Exact,
                Mode::Accelerated => UpdateMode::Accelerated,
            },
            seed: self.seed,
        }
    }

    fn options(&self, shape: (usize, usize)) -> DecomposeOptions {
        DecomposeOptions {
            initial_rank: self
                .initial_rank
                .unwrap_or_else(|| DecomposeOptions::default_initial_rank(shape)),
            max_layers: self.max_layers,
            mbp_sweeps: self.mbp,
        }
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Support threshold on raw values.
    #[arg(long, default_value_t = 0.0, conflicts_with = "relative_threshold")]
    threshold: f64,
    /// Support threshold as a fraction of each row's maximum.
    #[arg(long)]
    relative_threshold: Option<f64>,
}

impl ThresholdArgs {
    fn threshold(&self) -> Threshold {
        match self.relative_threshold {
            Some(f) => Threshold::Relative(f),
            None => Threshold::Absolute(self.threshold),
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// Templates to score the deepest layer's features against.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    threshold: ThresholdArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Comma-separated, strictly decreasing, e.g. 25,6
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    /// Dense noise standard deviation relative to a signal RMS of 1.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    density: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write CSV instead of DMAT.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Seed of the random row split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn emit(out: Option<&Path>, json: String) -> delmar::Result<()> {
    match out {
        Some(path) => fs::write(path, json + "\n")?,
        None => {
            // A closed pipe (e.g. `| head`) is not an error for the caller.
            if let Err(e) = writeln!(std::io::stdout(), "{json}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> delmar::Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| DelmarError::MalformedReport(e.to_string()))
}

fn run_decompose(args: DecomposeArgs) -> delmar::Result<()> {
    let s = read_matrix(&args.input)?;
    let config = args.solver.config();
    let options = args.solver.options(s.dim());
    let templates = args.templates.as_ref().map(read_matrix).transpose()?;

    let start = Instant::now();
    let (mut stack, traces) = decompose_forward(&s, &config, &options)?;
    let forward_ms = ms(start);
    let mbp_start = Instant::now();
    for _ in 0..options.mbp_sweeps {
        stack = backpropagate(&stack, &s)?.0;
    }
    let mbp_ms = ms(mbp_start);

    let metrics = templates
        .map(|t| {
            let features = &stack.layers[stack.depth - 1].y;
            compare_features(features, &t, args.threshold.threshold(), None)
        })
        .transpose()?;

    fs::create_dir_all(&args.out)?;
    for (k, layer) in stack.layers.iter().enumerate() {
        let k = k + 1;
        write_matrix(args.out.join(format!("layer{k}_x.dmat")), &layer.x)?;
        write_matrix(args.out.join(format!("layer{k}_y.dmat")), &layer.y)?;
        write_matrix(args.out.join(format!("layer{k}_z.dmat")), &layer.z)?;
    }
    let report = RunReport {
        input_digest: matrix_digest(&s)?,
        input_shape: s.dim(),
        config,
        depth: stack.depth,
        ranks: stack.ranks.clone(),
        per_layer_residuals: traces.iter().map(|t| t.final_residual()).collect(),
        iterations: traces.iter().map(|t| t.iterations).collect(),
        terminations: traces.iter().map(|t| t.termination).collect(),
        reconstruction_errors: reconstruction_errors(&stack, &s)?,
        mbp_applied: options.mbp_sweeps > 0,
        options,
        metrics,
        wall_time_ms: WallTimes {
            forward_ms,
            mbp_ms,
            total_ms: ms(start),
        },
    };
    fs::write(args.out.join("report.json"), report.to_json()? + "\n")?;
    Ok(())
}

fn run_synth(args: SynthArgs) -> delmar::Result<()> {
    let spec = SynthSpec {
        m: args.m,
        n: args.n,
        ranks: args.ranks,
        noise_sigma: args.noise,
        background_density: args.density,
        background_amplitude: args.amplitude,
        seed: args.seed,
    };
    let truth = generate(&spec)?;
    fs::create_dir_all(&args.out)?;
    let ext = if args.csv { "csv" } else { "dmat" };
    let write = |name: &str, m: &Matrix| write_matrix(args.out.join(format!("{name}.{ext}")), m);
    write("s", &truth.s)?;
    write("y_true", &truth.y_true)?;
    write("z_true", &truth.z_true)?;
    for (k, x) in truth.x_true.iter().enumerate() {
        write(&format!("x{}", k + 1), x)?;
    }
    for (k, y) in truth.y_levels.iter().enumerate() {
        write(&format!("y_level{}", k + 1), y)?;
    }
    fs::write(args.out.join("spec.json"), to_json(&spec)? + "\n")?;
    Ok(())
}

fn run_metrics(args: MetricsArgs) -> delmar::Result<()> {
    let features = read_matrix(&args.features)?;
    let templates = read_matrix(&args.templates)?;
    let report = compare_features(&features, &templates, args.threshold.threshold(), None)?;
    emit(args.out.as_deref(), to_json(&report)?)
}

fn run_reproducibility(args: ReproArgs) -> delmar::Result<()> {
    let s = read_matrix(&args.input)?;
    let half_shape = (s.nrows() / 2, s.ncols());
    let result = split_half_reproducibility(
        &s,
        &args.solver.config(),
        &args.solver.options(half_shape),
        args.split_seed,
    )?;
    emit(args.out.as_deref(), to_json(&result)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(a) => run_decompose(a),
        Command::Synth(a) => run_synth(a),
        Command::Metrics(a) => run_metrics(a),
        Command::Reproducibility(a) => run_reproducibility(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let body = serde_json::json!({
                "error": { "code": err.code(), "message": err.to_string() }
            });
            eprintln!("{body}");
            ExitCode::from(if err.is_numerical_failure() { 4 } else { 3 })
        }
    }
}
