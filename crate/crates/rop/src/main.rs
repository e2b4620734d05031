use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rop::commands::{cmd_analyze, cmd_enhance, cmd_eval, cmd_gradcheck, cmd_ingest, cmd_synth, cmd_train, Report};
use rop::config::{Resolved, RunConfig, Task};
use rop::error::{AppError, AppResult};
use rop_core::kbc::Split;

/// Recurrent one-hop predictors for multi-hop knowledge-graph reasoning.
#[derive(Parser)]
#[command(name = "rop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key (repeatable); wins over the file and ROP_* variables.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation threads (0: all cores).
    #[arg(long, default_value_t = 1, env = "ROP_THREADS")]
    threads: usize,
}

impl RunArgs {
    fn resolve(&self) -> AppResult<Resolved> {
        let mut c = RunConfig::new();
        if let Some(p) = &self.config {
            c.merge_file(p)?;
        }
        c.merge_env(std::env::vars().filter(|(k, _)| k != "ROP_THREADS"))?;
        c.merge_overrides(self.set.iter().map(String::as_str))?;
        if let Some(s) = self.seed {
            c.set("seed", &s.to_string())?;
        }
        if let Some(e) = self.epochs {
            c.set("epochs", &e.to_string())?;
        }
        if let Some(o) = &self.out {
            c.set("out", &o.display().to_string())?;
        }
        c.resolve()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Pqa,
    Kbc,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a triple file and report its size.
    Ingest {
        triples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill base paths with intermediate entities from a triple store.
    Enhance {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        paths: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset bundle with a ready-made config.
    Synth {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per a config; checkpoints every epoch.
    Train(RunArgs),
    /// Evaluate a checkpoint on the config's data.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Compare analytic gradients with finite differences on every
    /// architecture and the KBC joint loss.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Fail on any entry above tolerance, even one explained by
        /// finite-difference truncation.
        #[arg(long)]
        strict: bool,
        /// Perturb one analytic gradient entry per case (checks the checker).
        #[arg(long, hide = true)]
        corrupt_backward: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Length buckets and inverse-relation share from results.jsonl.
    Analyze {
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> AppResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Ingest { triples, out } => print_json(&cmd_ingest(&triples, &out)?),
        Command::Enhance {
            triples,
            paths,
            seed,
            out,
        } => print_json(&cmd_enhance(&triples, &paths, seed, &out)?),
        Command::Synth { task, seed, out } => {
            let task = match task {
                TaskArg::Pqa => Task::Pqa,
                TaskArg::Kbc => Task::Kbc,
            };
            let conf = cmd_synth(task, seed, &out)?;
            println!("{}", conf.display());
            Ok(())
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let outcome = cmd_train(&cfg, args.threads)?;
            print_json(&outcome)
        }
        Command::Eval { run, checkpoint, split } => {
            let cfg = run.resolve()?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Dev => Split::Dev,
                SplitArg::Test => Split::Test,
            };
            let report: Report = cmd_eval(&cfg, &checkpoint, split, run.threads, &cfg.out)?;
            print_json(&report)
        }
        Command::Gradcheck {
            dim,
            seeds,
            strict,
            corrupt_backward,
            out,
        } => {
            let s = cmd_gradcheck(dim, seeds, corrupt_backward, out.as_deref())?;
            println!(
                "{} cases, max rel err {:.3e}, {} above {:.0e} at step {:.0e}, {} unexplained by truncation",
                s.cases, s.max_rel_err, s.strict_failures, s.tol, s.step, s.unexplained_failures
            );
            if s.unexplained_failures > 0 || (strict && s.strict_failures > 0) {
                return Err(AppError::Numeric("gradient check failed".into()));
            }
            Ok(())
        }
        Command::Analyze { results, out } => print_json(&cmd_analyze(&results, &out)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
