//! `fairrank`: generate instances, rank them, evaluate rankings and run seeded
//! experiments. Exit codes: 0 success, 2 configuration or input error, 3 runtime
//! failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairrank::experiment::{
    rank_with, run_experiment, summarize, write_csv, Algorithm, ExperimentConfig, InstanceSource, RankOptions,
    SizeSource,
};
use fairrank::io::{instance_to_json, read_instance, read_ranking, ranking_to_json};
use fairrank::metrics::evaluate;
use fairrank::{Error, GammaMode, SpecParams};

#[derive(Parser, Debug)]
#[command(name = "fairrank", version, about = "Fair ranking under noisy group membership")]
struct Cli {
    /// Worker threads for parallel sections; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic instance as JSON.
    Generate(GenerateArgs),
    /// Rank an instance and write the ranking as JSON.
    Rank(RankArgs),
    /// Print the metric report of a ranking against the instance's true groups.
    Evaluate(EvaluateArgs),
    /// Run a configured experiment and write CSV rows.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    FdrSynth,
    Multigroup,
    HalfHalf,
    RandomizedResponse,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sizes {
    True,
    Estimated,
    Unbiased,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long = "gen", value_enum)]
    generator: Generator,
    #[arg(long)]
    m: usize,
    /// Ranking length; defaults to min(m, 25).
    #[arg(long)]
    n: Option<usize>,
    /// Group count for the multigroup and half-half generators.
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Target FDR gap (fdr-synth).
    #[arg(long, default_value_t = 0.3)]
    gap: f64,
    /// Mixing weight, overrides --gap (fdr-synth).
    #[arg(long)]
    tau: Option<f64>,
    /// Flip probability (randomized-response).
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    /// First-group share (randomized-response).
    #[arg(long, default_value_t = 0.5)]
    share: f64,
    /// Group sizes fed to the posterior (randomized-response).
    #[arg(long, value_enum, default_value = "unbiased")]
    sizes: Sizes,
    #[arg(long, default_value_t = 0.1)]
    fdr_low: f64,
    #[arg(long, default_value_t = 0.4)]
    fdr_high: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GammaKind {
    Heuristic,
    Theoretical,
    Improved,
    PositionWeighted,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    instance: PathBuf,
    /// One of nresilient, uncons, csv, sj, gak, mc, csv-indep, sj-indep, gak-indep.
    #[arg(long = "algo", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[arg(long, value_enum, default_value = "heuristic")]
    gamma: GammaKind,
    /// Required by the improved and position-weighted gamma modes.
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long, default_value_t = 1.5)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 3.0)]
    d: f64,
    /// Swap rounding passes.
    #[arg(long, default_value_t = fairrank::swapround::DEFAULT_T)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Must carry "truth".
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output path; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-cell means and standard errors as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch(_)
            | Error::ProbabilityOutOfRange { .. }
            | Error::NegativeUtility { .. }
            | Error::RowSumViolation { .. }
            | Error::InvalidRanking(_)
            | Error::InvalidAssignment(_)
            | Error::InvalidSpec(_)
            | Error::ZeroGroupSize(_)
            | Error::PhiOutOfRange { .. }
            | Error::DeltaOutOfRange(_)
            | Error::PsiAssumptionViolated { .. }
            | Error::EtaTooLarge(_)
            | Error::FamilyConditionViolated(_)
            | Error::EmptyCheckpointSet
            | Error::ConfigInvalid(_)
            | Error::Io(_)
            | Error::Parse(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    let text = if text.ends_with('\n') { text.to_string() } else { format!("{text}\n") };
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn generate(a: GenerateArgs) -> CliResult {
    let n = a.n.unwrap_or(a.m.min(25));
    let source = match a.generator {
        Generator::FdrSynth => InstanceSource::FdrSynth {
            m: a.m,
            n,
            gap: a.gap,
            tau: a.tau,
        },
        Generator::Multigroup => InstanceSource::Multigroup {
            m: a.m,
            n,
            p: a.p,
            fdr_low: a.fdr_low,
            fdr_high: a.fdr_high,
        },
        Generator::HalfHalf => InstanceSource::HalfHalf { m: a.m, n, p: a.p },
        Generator::RandomizedResponse => InstanceSource::RandomizedResponse {
            m: a.m,
            n,
            eta: a.eta,
            share: a.share,
            sizes: match a.sizes {
                Sizes::True => SizeSource::True,
                Sizes::Estimated => SizeSource::Estimated,
                Sizes::Unbiased => SizeSource::Unbiased,
            },
        },
    };
    let inst = source.generate(a.seed)?;
    emit(a.out.as_deref(), &instance_to_json(&inst)?)
}

fn rank(a: RankArgs) -> CliResult {
    let inst = read_instance(&a.instance)?;
    let need_psi = || a.psi.ok_or_else(|| Failure::Config("this gamma mode needs --psi".into()));
    let gamma = match a.gamma {
        GammaKind::Heuristic => GammaMode::Heuristic,
        GammaKind::Theoretical => GammaMode::theoretical(),
        GammaKind::Improved => GammaMode::Improved { psi: need_psi()? },
        GammaKind::PositionWeighted => GammaMode::PositionWeighted { psi: need_psi()? },
    };
    if a.t == 0 {
        return Err(Failure::Config("--t must be at least 1".into()));
    }
    let opts = RankOptions {
        phi: a.phi,
        gamma,
        params: SpecParams {
            c: a.c,
            delta: a.delta,
            d: a.d,
        },
        t: a.t,
        seed: a.seed,
    };
    let r = rank_with(a.algorithm, &inst, &opts, None)?;
    emit(a.out.as_deref(), &ranking_to_json(&r, inst.m())?)
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let inst = read_instance(&a.instance)?;
    let (r, m) = read_ranking(&a.ranking)?;
    if m != inst.m() {
        return Err(Failure::Config(format!("ranking is over {m} items, instance has {}", inst.m())));
    }
    let truth = inst
        .truth()
        .ok_or_else(|| Failure::Config("instance has no \"truth\" field".into()))?;
    let report = evaluate(&r, &inst, truth)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(a.out.as_deref(), &json)
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::Config(format!("{}: {e}", a.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.out.is_some() {
        cfg.output = a.out;
    }
    let rows = run_experiment(&cfg)?;
    emit(cfg.output.as_deref(), &write_csv(&rows, &cfg.metrics)?)?;
    if let Some(path) = a.summary {
        let json = serde_json::to_string_pretty(&summarize(&rows)).map_err(|e| Failure::Runtime(e.to_string()))?;
        emit(Some(&path), &json)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
