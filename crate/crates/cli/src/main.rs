use std::path::PathBuf;
use std::process::ExitCode;

use advmorph::harness::{
    emit_evaluation, emit_reports, evaluate_delta, evaluation_seed, load_delta, load_report,
    run_sweep, validate_de, write_trace, ExperimentConfig,
};
use advmorph::{eval::derive_seed, AttackKind};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "advmorph",
    version,
    about = "Adversarial body-shape search for legged walkers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fitness estimates per grand average.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run sweep cells concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Attack at a single epsilon.
    Search {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        kind: Option<AttackKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Search and evaluate every configured (epsilon, kind) cell.
    Sweep {
        /// Comma-separated epsilons, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        kind: Vec<AttackKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Grand average of a stored perturbation.
    Evaluate {
        /// A `search_*.json` file or any JSON with kind, epsilon, delta_best.
        #[arg(long)]
        delta: PathBuf,
        /// Also write a per-step trace of one episode to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-emit report files from a result.json.
    Report {
        result: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the DE convergence suites on benchmark functions.
    ValidateDe,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = common.runs {
        cfg.eval.runs = r;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.parallel |= common.parallel;
    Ok(cfg)
}

fn sweep(cfg: ExperimentConfig) -> Result<ExitCode> {
    let report = run_sweep(&cfg)?;
    emit_reports(&report, &cfg.output_dir)?;
    let mut ok = true;
    for c in &report.cells {
        match (&c.error, c.grand_mean) {
            (Some(e), _) => {
                ok = false;
                eprintln!("eps={} kind={}: FAILED: {e}", c.epsilon, c.kind);
            }
            (None, Some(g)) => println!("eps={} kind={}: grand mean {g:.4}", c.epsilon, c.kind),
            (None, None) => {}
        }
    }
    println!("reports written to {}", cfg.output_dir.display());
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Search {
            epsilon,
            kind,
            common,
        } => {
            if epsilon <= 0.0 {
                bail!("search needs a positive --epsilon");
            }
            let mut cfg = load_config(&common)?;
            cfg.epsilons = vec![epsilon];
            cfg.report_epsilon = None;
            if let Some(k) = kind {
                cfg.kinds = vec![k];
            }
            sweep(cfg)
        }
        Command::Sweep {
            epsilon,
            kind,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if !epsilon.is_empty() {
                cfg.epsilons = epsilon;
                if cfg
                    .report_epsilon
                    .is_some_and(|r| !cfg.epsilons.contains(&r))
                {
                    cfg.report_epsilon = None;
                }
            }
            if !kind.is_empty() {
                cfg.kinds = kind;
            }
            sweep(cfg)
        }
        Command::Evaluate {
            delta,
            trace,
            common,
        } => {
            let cfg = load_config(&common)?;
            let d = load_delta(&delta)?;
            let cell = evaluate_delta(&cfg, &d)?;
            emit_evaluation(&cell, &cfg.output_dir)?;
            if let Some(path) = trace {
                let walker = cfg.walker()?;
                let pv = advmorph::PerturbationVector::new(
                    d.delta_best.clone(),
                    d.epsilon,
                    &walker.body().attack_mask(d.kind),
                )?;
                let body = walker.body().perturb(d.kind, &pv)?;
                let seed = derive_seed(evaluation_seed(cfg.master_seed), 0, 0);
                let (_, rows) = walker.trace_episode(&body, cfg.eval.horizon, seed)?;
                write_trace(&path, &rows)?;
            }
            println!(
                "eps={} kind={}: grand mean {:.4}",
                cell.epsilon,
                cell.kind,
                cell.grand_mean.unwrap_or(f64::NAN)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { result, common } => {
            let report = load_report(&result)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| report.config.output_dir.clone());
            let files = emit_reports(&report, &out)
                .with_context(|| format!("re-emitting {}", result.display()))?;
            println!("{} files written to {}", files.len(), out.display());
            Ok(if report.all_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ValidateDe => {
            let mut ok = true;
            for suite in validate_de() {
                for s in &suite.seeds {
                    println!(
                        "  {} seed {:3}: G_min={:.3e} max-norm={:.3e} {}",
                        suite.spec.name,
                        s.seed,
                        s.g_min,
                        s.max_norm,
                        if s.passed { "ok" } else { "miss" }
                    );
                }
                println!("{suite}");
                ok &= suite.passed;
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADVMORPH_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
