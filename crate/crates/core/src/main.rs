use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drfit::cli::{
    cmd_detect, cmd_mnist_prep, cmd_sweep, cmd_theory, cmd_train, ExperimentConfig, ExperimentKind,
};
use drfit::data::noise::RhoMode;
use drfit::trainer::Solver;
use drfit::{Error, Result};

#[derive(Parser)]
#[command(name = "drfit", version, about = "Noise-robust training with learned observation weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train replications and write per-run and aggregate artifacts.
    Train(RunArgs),
    /// Evaluate a population-level scenario and write a report.
    Theory(TheoryArgs),
    /// Grid search over alpha and lambda by validation accuracy.
    Sweep(SweepArgs),
    /// Recompute histograms, separation curve and AUC from a weights.csv.
    Detect(DetectArgs),
    /// Filter, pool, split and contaminate MNIST, then write CSV snapshots.
    MnistPrep(PrepArgs),
}

/// Flags mirroring config keys; any flag given overrides the file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_rho_mode)]
    rho_mode: Option<RhoMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    omega_lr: Option<f64>,
    #[arg(long, value_parser = parse_solver)]
    solver: Option<Solver>,
    /// Base training seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-class flip rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Directory with the IDX files (otherwise the config, then $DRFIT_DATA_ROOT).
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Experiment kind when no config file is given.
    #[arg(long, default_value = "mnist-1v7", value_parser = parse_kind)]
    kind: ExperimentKind,
    /// Worker threads for replications.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "theory-1d", value_parser = parse_kind)]
    kind: ExperimentKind,
    /// Flip probability of both classes.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Training pipeline for each grid point.
    #[arg(long, value_parser = parse_kind)]
    source: Option<ExperimentKind>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DetectArgs {
    /// A weights.csv written by `train`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    overrides: Overrides,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    parse_enum(s)
}

fn parse_solver(s: &str) -> std::result::Result<Solver, String> {
    parse_enum(s)
}

fn parse_rho_mode(s: &str) -> std::result::Result<RhoMode, String> {
    parse_enum(s)
}

fn base_config(path: Option<&PathBuf>, kind: ExperimentKind) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::new(kind)),
    }
}

fn apply(o: &Overrides, cfg: &mut ExperimentConfig) {
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.objective.alpha, o.alpha);
    set(&mut cfg.objective.lambda, o.lambda);
    set(&mut cfg.train.theta_lr, o.lr);
    set(&mut cfg.train.omega_lr, o.omega_lr);
    if let Some(v) = o.rho_mode {
        cfg.objective.rho_mode = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = o.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = o.solver {
        cfg.train.solver = v;
    }
    if let Some(v) = o.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = &o.noise {
        cfg.noise.rates = v.clone();
    }
    if let Some(v) = o.noise_seed {
        cfg.noise.seed = v;
    }
    if let Some(v) = o.replications {
        cfg.replications = v;
    }
    if let Some(v) = &o.data_root {
        cfg.data.root = Some(v.clone());
    }
    if let Some(v) = o.train_size {
        cfg.data.train_size = Some(v);
    }
    if let Some(v) = &o.out {
        cfg.output_dir = v.clone();
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let mut cfg = base_config(a.overrides.config.as_ref(), a.kind)?;
            apply(&a.overrides, &mut cfg);
            let report = cmd_train(&cfg, a.workers)?;
            println!(
                "digest {} | train {} validation {} test {}",
                &report.digest[..16],
                report.split.train,
                report.split.validation,
                report.split.test
            );
            for r in &report.replications {
                match &r.result {
                    Ok(run) => println!(
                        "seed {:>4}  peak {}  final {}  auc {}  crashed {}  -> {}",
                        r.seed,
                        fmt(run.record.peak_test_accuracy()),
                        fmt(run.record.final_test_accuracy()),
                        fmt(run.record.detection_auc),
                        run.record.crashed,
                        run.dir.display()
                    ),
                    Err(msg) => println!("seed {:>4}  failed: {msg}", r.seed),
                }
            }
            println!("summary -> {}", report.summary_dir.display());
            if report.successful().next().is_none() {
                return Err(Error::Training {
                    epoch: 0,
                    reason: "every replication failed".into(),
                });
            }
        }
        Command::Theory(a) => {
            let mut cfg = base_config(a.config.as_ref(), a.kind)?;
            if let Some(q) = a.q {
                cfg.theory.q = q;
            }
            if let Some(out) = a.out {
                cfg.output_dir = out;
            }
            let (report, dir) = cmd_theory(&cfg)?;
            for e in &report.entries {
                let check = match e.pass {
                    Some(true) => "  [pass]",
                    Some(false) => "  [FAIL]",
                    None => "",
                };
                println!("{:<28} {}{check}", e.key, e.value);
            }
            println!("report -> {}", dir.display());
        }
        Command::Sweep(a) => {
            let mut cfg = base_config(a.overrides.config.as_ref(), ExperimentKind::HyperSweep)?;
            apply(&a.overrides, &mut cfg);
            if let Some(v) = a.alphas {
                cfg.sweep.alphas = v;
            }
            if let Some(v) = a.lambdas {
                cfg.sweep.lambdas = v;
            }
            if let Some(v) = a.source {
                cfg.sweep.source = v;
            }
            let report = cmd_sweep(&cfg, a.workers)?;
            for g in &report.grid {
                println!(
                    "alpha {:<8} lambda {:<8} validation {}  crashed {}  failed {}",
                    g.alpha,
                    g.lambda,
                    fmt(g.mean_validation_accuracy),
                    g.crashed,
                    g.failed
                );
            }
            match report.best {
                Some(b) => println!("best alpha {} lambda {}", b.alpha, b.lambda),
                None => println!("every grid point crashed or failed"),
            }
        }
        Command::Detect(a) => {
            let r = cmd_detect(&a.weights, &a.out)?;
            println!(
                "examples {}  mislabelled {}  auc {}  threshold {}  kept {}  caught {}",
                r.examples,
                r.mislabelled.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
                fmt(r.detection_auc),
                fmt(r.best_threshold),
                fmt(r.correct_kept),
                fmt(r.mislabelled_caught)
            );
        }
        Command::MnistPrep(a) => {
            let mut cfg = base_config(a.overrides.config.as_ref(), ExperimentKind::Mnist1v7)?;
            apply(&a.overrides, &mut cfg);
            let out = cfg.output_dir.clone();
            let sizes = cmd_mnist_prep(&cfg, &out)?;
            println!(
                "train {} validation {} test {} -> {}",
                sizes.train,
                sizes.validation,
                sizes.test,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
