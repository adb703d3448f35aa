use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dance_cli::commands::{self, usage, FinalizeOutcome, RunSpec, UsageError};
use dance_cli::config::{Config, Preset};
use dance_cli::pipeline::run_pipeline;
use dance_cli::report::Method;
use dance_core::cosearch::{LossVariant, WarmupConfig};
use dance_core::objective::CostFunctionSpec;

#[derive(Parser)]
#[command(name = "dance", version, about = "Differentiable accelerator/network co-exploration")]
struct Cli {
    /// Worker threads for data-parallel phases (defaults to all cores).
    #[arg(long, global = true, env = "DANCE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set search.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "PATH=JSON")]
    overrides: Vec<String>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        Config::load(self.config.as_deref(), &self.overrides).map_err(|e| usage(format!("{e:#}")))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample networks, run the oracle and write the training CSV.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        networks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the hardware generator and cost estimator.
    TrainEvaluator {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feed only the architecture to the cost estimator.
        #[arg(long)]
        no_forwarding: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a trained evaluator on a dataset.
    EvalEvaluator {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run one architecture search.
    Search(SearchArgs),
    /// Pick hardware with the oracle and retrain the derived network.
    Finalize {
        #[arg(long)]
        run: PathBuf,
        /// Evaluator for the surrogate comparison; defaults to the one used by the search.
        #[arg(long)]
        evaluator: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Collect finalized runs into report.csv and scatter.svg.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Dataset, evaluator, sweep, baselines and report in one go.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip phases already completed in `out`.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    evaluator: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// `edap`, `latency`, `energy`, `balanced` or `linear:λL,λE,λA`.
    #[arg(long)]
    cost: Option<CostFunctionSpec>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Warm-up as `EPOCHS,LAMBDA2_SMALL`.
    #[arg(long, value_name = "EPOCHS,LAMBDA2", conflicts_with = "no_warmup")]
    warmup: Option<String>,
    #[arg(long)]
    no_warmup: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `dance`, `edd_original` or `edd_fixed`.
    #[arg(long, default_value = "dance")]
    variant: LossVariant,
    /// Search for accuracy only; no evaluator needed.
    #[arg(long, conflicts_with = "variant")]
    no_penalty: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn parse_warmup(s: &str) -> Result<WarmupConfig> {
    let (e, l) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("--warmup expects EPOCHS,LAMBDA2, got '{s}'")))?;
    let epochs = e.trim().parse().map_err(|_| usage(format!("bad warm-up epochs '{e}'")))?;
    let lambda2_small = l.trim().parse().map_err(|_| usage(format!("bad warm-up lambda2 '{l}'")))?;
    Ok(WarmupConfig {
        epochs_small: Some(epochs),
        lambda2_small,
        ..WarmupConfig::default()
    })
}

fn search_cmd(a: SearchArgs) -> Result<()> {
    let mut cfg = a.cfg.load()?;
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    let s = &mut cfg.search.config;
    if let Some(c) = a.cost {
        s.cost_fn = c;
    }
    if let Some(e) = a.epochs {
        *s = s.clone().with_epochs(e);
    }
    if let Some(w) = &a.warmup {
        s.warmup = Some(parse_warmup(w)?);
    }
    let method = if a.no_penalty {
        Method::NoPenalty
    } else if a.variant == LossVariant::Dance {
        Method::Dance
    } else {
        Method::Edd
    };
    let lambda2 = if a.no_penalty { 0.0 } else { a.lambda2.unwrap_or(s.lambda2) };
    let spec = RunSpec {
        method,
        variant: if a.no_penalty { LossVariant::Dance } else { a.variant },
        lambda2,
        warmup: !a.no_warmup,
    };
    if let Some(w) = &mut cfg.search.config.warmup {
        if a.warmup.is_some() && w.lambda2_small > lambda2 {
            return Err(usage("warm-up lambda2 must not exceed --lambda2"));
        }
    }
    cfg.search.config.validate().map_err(|e| usage(e.to_string()))?;
    commands::run_search(&cfg, &spec, a.evaluator.as_deref(), &a.out, a.cfg.force)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::GenDataset {
            out,
            networks,
            seed,
            cfg,
        } => {
            let mut c = cfg.load()?;
            if let Some(s) = seed {
                c = c.with_seed(s);
            }
            if let Some(n) = networks {
                c.dataset.networks = n;
            }
            commands::gen_dataset(&c, &out, cfg.force)
        }
        Command::TrainEvaluator {
            dataset,
            out,
            no_forwarding,
            seed,
            cfg,
        } => {
            let mut c = cfg.load()?;
            if let Some(s) = seed {
                c = c.with_seed(s);
            }
            if no_forwarding {
                c.evaluator.forwarding = false;
            }
            commands::train_evaluator(&c, &dataset, &out, cfg.force)
        }
        Command::EvalEvaluator {
            model,
            dataset,
            report,
            force,
        } => commands::eval_evaluator(&model, &dataset, &report, force),
        Command::Search(a) => search_cmd(a),
        Command::Finalize { run, evaluator, force } => {
            if let FinalizeOutcome::Collapsed(msg) = commands::finalize_run(&run, evaluator.as_deref(), force)? {
                eprintln!("warning: {msg}");
                return Err(anyhow::anyhow!("{}: every position chose Zero; nothing to finalize", run.display()));
            }
            Ok(())
        }
        Command::Report { out_dir, runs, force } => commands::report(&runs, &out_dir, force),
        Command::Pipeline {
            out,
            preset,
            seed,
            resume,
            cfg,
        } => {
            let mut c = cfg.load()?;
            c.apply_preset(preset);
            let c = c.with_seed(seed);
            run_pipeline(&c, &out, resume, cfg.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
