//! Command-line front end for temporal-order-preserving transport: solves
//! couplings between feature files, renders them as graymaps, evaluates
//! the full objective, and generates deterministic synthetic fixtures.
//!
//! Exit codes: 0 on success, 1 on any input or configuration error, 2 when
//! --strict is set and the solver stops without converging (outputs are
//! still written in that case).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use tot_core::{
    combined_cost_beta, cosine_cost, entropy, evaluate_pair, ot_objective, temporal_distance,
    tot_coupling, AdapterWeights, CtcLoss, FeatureSequence, SinkhornConfig, TokenSequence,
    DEFAULT_BETA, DEFAULT_LAMBDA, DEFAULT_W, DEV_BEST, TEST_BEST,
};

mod formats;
mod synth;

use formats::{
    atomic_write, read_coupling_csv, read_feature_file, read_labels_file, read_weights_file,
    render_pgm, write_coupling_csv, write_feature_file, write_labels_file, write_weights_file,
};
use synth::{generate, SynthSpec};

/// Band half-width for the near-diagonal mass statistic in coupling stats.
const NEAR_DIAGONAL_BAND: f64 = 0.1;

const DEFAULT_VOCAB: usize = 16;
const DEFAULT_NOISE: f64 = 0.1;
const DEFAULT_SCALE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NonConvergence(String),
}

impl From<tot_core::Error> for CliError {
    fn from(err: tot_core::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "tot",
    version,
    about = "Temporal-order-preserving optimal transport for sequence pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature pair and label file with a known
    /// monotone correspondence.
    Synth(SynthArgs),
    /// Generate a deterministic adapter weights file.
    SynthWeights(SynthWeightsArgs),
    /// Couple two feature files and write the coupling CSV plus stats.
    Coupling(CouplingArgs),
    /// Render a coupling CSV as a plain-text P2 graymap.
    Heatmap(HeatmapArgs),
    /// Evaluate the full objective for a feature pair and write a report.
    Loss(LossArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Best development-split settings: epsilon 0.5, adapter scale 0.1.
    DevBest,
    /// Best test-split settings: epsilon 0.01, adapter scale 0.1.
    TestBest,
}

impl PresetArg {
    fn bundle(self) -> tot_core::Preset {
        match self {
            PresetArg::DevBest => DEV_BEST,
            PresetArg::TestBest => TEST_BEST,
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    /// Weight on the squared temporal distance in the combined cost.
    #[arg(long)]
    beta: Option<f64>,
    /// Entropic regularization temperature.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Marginal L1 violation below which the solver stops.
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep budget before the solver gives up.
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
    /// Force log-domain evaluation regardless of epsilon.
    #[arg(long)]
    stabilized: bool,
    /// Named hyper-parameter bundle; explicit flags still win.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Exit with code 2 when the solver does not converge.
    #[arg(long)]
    strict: bool,
}

/// Fully resolved solve settings: explicit flags beat the preset, which
/// beats the defaults.
struct RunManifest {
    beta: f64,
    cfg: SinkhornConfig,
    scale: Option<f64>,
    strict: bool,
}

impl RunManifest {
    fn resolve(flags: &SolverFlags, scale_flag: Option<f64>) -> Self {
        let preset = flags.preset.map(PresetArg::bundle);
        let epsilon = flags
            .epsilon
            .or(preset.map(|p| p.epsilon))
            .unwrap_or(tot_core::DEFAULT_EPSILON);
        let mut cfg = SinkhornConfig::new(epsilon);
        if let Some(tol) = flags.tol {
            cfg = cfg.with_tolerance(tol);
        }
        if let Some(n) = flags.max_iter {
            cfg = cfg.with_max_iterations(n);
        }
        if flags.stabilized {
            cfg = cfg.with_stabilized(true);
        }
        RunManifest {
            beta: flags.beta.unwrap_or(DEFAULT_BETA),
            cfg,
            scale: scale_flag.or(preset.map(|p| p.adapter_scale)),
            strict: flags.strict,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of acoustic frames.
    #[arg(long)]
    length_a: usize,
    /// Number of linguistic tokens (including CLS and SEP).
    #[arg(long)]
    length_t: usize,
    /// Feature dimension of both files.
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    seed: u64,
    /// Stretch the linguistic rows monotonically over the acoustic length
    /// instead of copying them one-to-one.
    #[arg(long)]
    warp: bool,
    /// Amplitude of the additive uniform noise on acoustic rows.
    #[arg(long, default_value_t = DEFAULT_NOISE)]
    noise: f64,
    /// Vocabulary size for the label file (ids 0..vocab).
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    vocab: usize,
    #[arg(long, value_name = "FILE")]
    out_acoustic: PathBuf,
    #[arg(long, value_name = "FILE")]
    out_linguistic: PathBuf,
    #[arg(long, value_name = "FILE")]
    out_labels: PathBuf,
}

#[derive(Args)]
struct SynthWeightsArgs {
    /// Acoustic feature dimension.
    #[arg(long)]
    d_a: usize,
    /// Linguistic feature dimension.
    #[arg(long)]
    d_t: usize,
    /// Vocabulary size of the prediction head.
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    vocab: usize,
    /// Residual fusion scale stored in the file.
    #[arg(long, default_value_t = DEFAULT_SCALE)]
    s: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct CouplingArgs {
    #[arg(long, value_name = "FILE")]
    acoustic: PathBuf,
    #[arg(long, value_name = "FILE")]
    linguistic: PathBuf,
    /// Destination CSV; stats go to the same name with extension
    /// "stats.txt".
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Coupling CSV produced by the coupling command.
    #[arg(long, value_name = "FILE")]
    coupling: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, value_name = "FILE")]
    acoustic: PathBuf,
    #[arg(long, value_name = "FILE")]
    linguistic: PathBuf,
    /// Label file; the first and last ids are the CLS and SEP sentinels.
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Adapter weights file.
    #[arg(long, value_name = "FILE", conflicts_with = "seed_weights")]
    weights: Option<PathBuf>,
    /// Generate adapter weights from this seed instead of a file.
    #[arg(long, value_name = "SEED")]
    seed_weights: Option<u64>,
    /// Vocabulary size for seeded weights.
    #[arg(long, default_value_t = DEFAULT_VOCAB)]
    vocab: usize,
    /// Weight of the CTC term against the alignment and transport terms.
    #[arg(long)]
    lambda: Option<f64>,
    /// Scale applied to the alignment and transport terms.
    #[arg(long)]
    w: Option<f64>,
    /// Residual fusion scale; overrides the preset and the weights file.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Input(_) => ExitCode::from(1),
                CliError::NonConvergence(_) => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::SynthWeights(args) => cmd_synth_weights(args),
        Command::Coupling(args) => cmd_coupling(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Loss(args) => cmd_loss(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let out = generate(&SynthSpec {
        length_a: args.length_a,
        length_t: args.length_t,
        dim: args.dim,
        seed: args.seed,
        warp: args.warp,
        noise: args.noise,
        vocab: args.vocab,
    })?;
    write_feature_file(&args.out_acoustic, &out.acoustic)?;
    write_feature_file(&args.out_linguistic, &out.linguistic)?;
    write_labels_file(&args.out_labels, &out.labels)
}

fn cmd_synth_weights(args: SynthWeightsArgs) -> Result<(), CliError> {
    let weights = AdapterWeights::seeded(args.d_a, args.d_t, args.vocab, args.s, args.seed)?;
    write_weights_file(&args.out, &weights)
}

fn load_pair(
    acoustic: &PathBuf,
    linguistic: &PathBuf,
) -> Result<(FeatureSequence, FeatureSequence), CliError> {
    let h = FeatureSequence::new(read_feature_file(acoustic)?, "acoustic")?;
    let z = FeatureSequence::new(read_feature_file(linguistic)?, "linguistic")?;
    Ok((h, z))
}

fn non_convergence(iterations: usize, violation: f64) -> CliError {
    CliError::NonConvergence(format!(
        "solver stopped after {iterations} sweeps with marginal violation {violation:e}"
    ))
}

fn cmd_coupling(args: CouplingArgs) -> Result<(), CliError> {
    let manifest = RunManifest::resolve(&args.solver, None);
    let (h, z) = load_pair(&args.acoustic, &args.linguistic)?;
    if h.dim() != z.dim() {
        return Err(CliError::Input(format!(
            "feature dimensions differ: {} ({}) vs {} ({})",
            h.dim(),
            args.acoustic.display(),
            z.dim(),
            args.linguistic.display()
        )));
    }
    let gamma = tot_coupling(&h, &z, manifest.beta, &manifest.cfg)?;

    let ground = cosine_cost(&h, &z)?;
    let combined = combined_cost_beta(&ground, manifest.beta, h.len(), z.len())?;
    let d_sq = temporal_distance(h.len(), z.len())?.mapv(|d| d * d);
    let temporal_cost: f64 = gamma
        .entries()
        .iter()
        .zip(&d_sq)
        .map(|(g, d)| g * d)
        .sum();

    let mut stats = String::new();
    for (key, value) in [
        ("rows", h.len().to_string()),
        ("cols", z.len().to_string()),
        ("beta", format!("{}", manifest.beta)),
        ("epsilon", format!("{}", manifest.cfg.epsilon)),
        ("iterations", gamma.iterations().to_string()),
        ("converged", gamma.converged().to_string()),
        ("marginal_violation", format!("{}", gamma.marginal_error())),
        ("transport_cost", format!("{}", ot_objective(&gamma, &ground)?)),
        ("temporal_cost", format!("{temporal_cost}")),
        ("combined_cost", format!("{}", ot_objective(&gamma, &combined)?)),
        ("entropy", format!("{}", entropy(&gamma)?)),
        (
            "near_diagonal_mass",
            format!("{}", gamma.near_diagonal_mass(NEAR_DIAGONAL_BAND)),
        ),
    ] {
        stats.push_str(key);
        stats.push(' ');
        stats.push_str(&value);
        stats.push('\n');
    }

    write_coupling_csv(&args.out, gamma.entries())?;
    atomic_write(&args.out.with_extension("stats.txt"), &stats)?;
    if manifest.strict && !gamma.converged() {
        return Err(non_convergence(gamma.iterations(), gamma.marginal_error()));
    }
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    let gamma = read_coupling_csv(&args.coupling)?;
    if let Some(((i, j), &v)) = gamma.indexed_iter().find(|(_, &v)| v < 0.0) {
        return Err(CliError::Input(format!(
            "{}: negative mass {v} at row {i}, column {j}",
            args.coupling.display()
        )));
    }
    atomic_write(&args.out, &render_pgm(&gamma))
}

fn cmd_loss(args: LossArgs) -> Result<(), CliError> {
    let manifest = RunManifest::resolve(&args.solver, args.s);
    let (h, z) = load_pair(&args.acoustic, &args.linguistic)?;
    let ids = read_labels_file(&args.labels)?;
    if ids.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: need at least CLS and SEP, got {} id(s)",
            args.labels.display(),
            ids.len()
        )));
    }
    let labels = TokenSequence::framed(ids.clone(), ids[0], *ids.last().expect("nonempty"))?;

    let mut weights = match (&args.weights, args.seed_weights) {
        (Some(path), None) => read_weights_file(path)?,
        (None, Some(seed)) => AdapterWeights::seeded(
            h.dim(),
            z.dim(),
            args.vocab,
            manifest.scale.unwrap_or(DEFAULT_SCALE),
            seed,
        )?,
        (None, None) => {
            return Err(CliError::Input(
                "one of --weights or --seed-weights is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(scale) = manifest.scale {
        weights.scale = scale;
    }

    let lambda = args.lambda.unwrap_or(DEFAULT_LAMBDA);
    let w_scale = args.w.unwrap_or(DEFAULT_W);
    let report = evaluate_pair(
        &h,
        &z,
        &labels,
        &weights,
        manifest.beta,
        &manifest.cfg,
        lambda,
        w_scale,
    )?;

    let mut text = String::new();
    match report.ctc {
        CtcLoss::Feasible(v) => text.push_str(&format!("ctc {v}\n")),
        CtcLoss::Infeasible => text.push_str("ctc infeasible\n"),
    }
    text.push_str(&format!("align {}\n", report.align));
    text.push_str(&format!("tot {}\n", report.tot));
    if let Some(v) = report.tot_regularized {
        text.push_str(&format!("tot_regularized {v}\n"));
    }
    text.push_str(&format!("lambda {}\n", report.lambda));
    text.push_str(&format!("w {}\n", report.w));
    if let Some(total) = report.total {
        text.push_str(&format!("total {total}\n"));
    }
    let stats = report.coupling.expect("pair evaluation always couples");
    text.push_str(&format!("coupling_converged {}\n", stats.converged));
    text.push_str(&format!("coupling_iterations {}\n", stats.iterations));
    text.push_str(&format!("coupling_marginal_error {}\n", stats.marginal_error));

    atomic_write(&args.out, &text)?;
    if manifest.strict && !stats.converged {
        return Err(non_convergence(stats.iterations, stats.marginal_error));
    }
    Ok(())
}
