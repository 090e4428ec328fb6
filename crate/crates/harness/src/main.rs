use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbf_harness::backtest::run_backtest;
use gbf_harness::experiment::{out_dir, recompute_metrics, run_experiment, run_pretrain, run_simulate};
use gbf_harness::report::write_report;
use gbf_harness::{ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "gbf", version, about = "Generative Bayesian filtering experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate one trajectory per replicate.
    Simulate(RunArgs),
    /// Run a filtering experiment.
    Filter(RunArgs),
    /// Train the shared pre-trained map or Gen-Gibbs bank.
    Pretrain(RunArgs),
    /// Run a Gen-Gibbs or exact Gibbs experiment.
    Gengibbs(RunArgs),
    /// Backtest posterior-predictive VaR/ES on a returns file.
    Backtest(RunArgs),
    /// Recompute aggregate tables from per-replicate metrics.
    Metrics(DirArgs),
    /// Write report.md for a run directory.
    Report(DirArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all available cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct DirArgs {
    /// Run directory.
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    /// Config whose output directory to use when `--out` is absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, String), HarnessError> {
        let (mut cfg, text) = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        cfg.validate()?;
        Ok((cfg, text))
    }

    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

impl DirArgs {
    fn dir(&self) -> Result<PathBuf, HarnessError> {
        match (&self.out, &self.config) {
            (Some(o), _) => Ok(o.clone()),
            (None, Some(c)) => Ok(out_dir(&ExperimentConfig::load(c)?.0)),
            (None, None) => Err(HarnessError::Config("--out or --config is required".into())),
        }
    }
}

fn experiment(args: &RunArgs, verb: &str, filter: bool) -> Result<(), HarnessError> {
    let (cfg, text) = args.load()?;
    if cfg.algorithm.is_filter() != filter {
        return Err(HarnessError::Config(format!(
            "`{}` is not a {verb} algorithm",
            cfg.algorithm.method_name()
        )));
    }
    let run = run_experiment(&cfg, &text, verb, args.threads())?;
    println!("{}", run.out.display());
    let failed = run.failed().len();
    if failed > 0 {
        return Err(HarnessError::Partial {
            failed,
            total: cfg.replicates,
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.verb {
        Verb::Simulate(a) => {
            let (cfg, text) = a.load()?;
            run_simulate(&cfg, &text)?;
            println!("{}", out_dir(&cfg).display());
        }
        Verb::Filter(a) => experiment(&a, "filter", true)?,
        Verb::Gengibbs(a) => experiment(&a, "gengibbs", false)?,
        Verb::Pretrain(a) => {
            let (cfg, text) = a.load()?;
            run_pretrain(&cfg, &text)?;
            println!("{}", out_dir(&cfg).display());
        }
        Verb::Backtest(a) => {
            let (cfg, text) = a.load()?;
            let s = run_backtest(&cfg, &text)?;
            for r in &s.reports {
                println!(
                    "q={} hit_rate={:.4} lr_uc={:.3} lr_ind={:.3} lr_cc={:.3}",
                    r.level, r.hit_rate, r.lr_uc, r.lr_ind, r.lr_cc
                );
            }
        }
        Verb::Metrics(a) => {
            recompute_metrics(&a.dir()?)?;
        }
        Verb::Report(a) => {
            print!("{}", write_report(&a.dir()?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gbf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
