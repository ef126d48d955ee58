use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pointclimb::experiment::{self, DatasetConfig, ExperimentConfig, Severity};
use pointclimb::losses::LossKind;
use pointclimb::sampler::{build_scenario, SamplerConfig};
use pointclimb::BackboneKind;

/// Overrides the ModelNet40 root named in a config.
const DATA_ROOT_ENV: &str = "POINTCLIMB_DATA_ROOT";

#[derive(Parser)]
#[command(
    name = "pointclimb",
    version,
    about = "Exemplar-free class-incremental learning on point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a veristic scenario and write it as JSON
    Sample {
        #[arg(long)]
        tc: usize,
        #[arg(long)]
        low: usize,
        #[arg(long)]
        high: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every (backbone, loss, seed) of an experiment
    Run(RunArgs),
    /// Re-aggregate the run directories of an earlier sweep
    Report { dir: PathBuf },
    /// Check a results bundle against the invariant suite
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON). Without one, the synthetic benchmark sweep runs.
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    backbones: Option<Vec<BackboneKind>>,
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<LossKind>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// ModelNet40 root; also read from POINTCLIMB_DATA_ROOT
    #[arg(long)]
    data_root: Option<PathBuf>,
}

enum Failure {
    /// Exit code 1.
    Run(String),
    /// Exit code 2.
    Config(String),
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sample {
            tc,
            low,
            high,
            seed,
            out,
        } => sample(SamplerConfig { tc, low, high, seed }, out.as_deref()),
        Command::Run(args) => run(args),
        Command::Report { dir } => report(&dir),
        Command::Verify { dir } => verify(&dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn sample(config: SamplerConfig, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = build_scenario(&config).map_err(config_err)?;
    match out {
        Some(path) => scenario.save(path).map_err(|e| Failure::Run(e.to_string())),
        None => {
            println!("{}", scenario.to_json());
            Ok(())
        }
    }
}

fn apply_flags(config: &mut ExperimentConfig, args: RunArgs) {
    if let Some(v) = args.output {
        config.output = v;
    }
    if let Some(v) = args.seeds {
        config.seeds = v;
    }
    if let Some(v) = args.backbones {
        config.backbones = v;
    }
    if let Some(v) = args.losses {
        config.losses = v;
    }
    if let Some(v) = args.workers {
        config.workers = v;
    }
    config.train.epochs = args.epochs.or(config.train.epochs);
    config.train.lr = args.lr.or(config.train.lr);
    config.train.n_points = args.n_points.or(config.train.n_points);
    let root = args
        .data_root
        .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from));
    if let (Some(root), DatasetConfig::Modelnet40 { path, .. }) = (root, &mut config.dataset) {
        *path = root;
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(config_err)?,
        None => ExperimentConfig::benchmark("pointclimb-out"),
    };
    apply_flags(&mut config, args);
    // Fail before any training compute.
    config.validate().map_err(config_err)?;
    pointclimb::heap::retain_large_allocations();

    let progress =
        |key: experiment::RunKey, outcome: Result<&experiment::RunManifest, &pointclimb::Error>| match outcome {
            Ok(m) => {
                let unions: Vec<String> = m.matrix.union().iter().map(|u| format!("{:.2}", 100.0 * u)).collect();
                eprintln!("finished {key}: {}", unions.join(" "));
            }
            Err(e) => eprintln!("failed {key}: {e}"),
        };
    let sweep = experiment::run_experiment(&config, progress).map_err(config_err)?;
    if !sweep.failures.is_empty() {
        let names: Vec<String> = sweep.failures.iter().map(|(k, e)| format!("{k}: {e}")).collect();
        return Err(Failure::Run(format!(
            "{} of {} runs failed; finished runs are kept under {}\n  {}",
            sweep.failures.len(),
            sweep.failures.len() + sweep.manifests.len(),
            sweep.prepared.config.output.join(experiment::RUNS_DIR).display(),
            names.join("\n  ")
        )));
    }
    print_table(&sweep.prepared.config.output)
}

fn print_table(dir: &Path) -> Result<(), Failure> {
    let table = std::fs::read_to_string(dir.join("table.txt")).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{table}");
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    experiment::report(dir).map_err(config_err)?;
    print_table(dir)
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let checks = experiment::verify_bundle(dir).map_err(config_err)?;
    let mut broken = 0;
    for c in &checks {
        let tag = match (c.passed, c.severity) {
            (true, _) => "PASS",
            (false, Severity::Invariant) => {
                broken += 1;
                "FAIL"
            }
            (false, Severity::Trend) => "WARN",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    if broken > 0 {
        return Err(Failure::Run(format!("{broken} invariant check(s) failed")));
    }
    Ok(())
}
