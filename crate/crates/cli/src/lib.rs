//! Argument parsing and exit-code mapping for the `petnn` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use petnn_core::run::{self, RunConfig, CHECKPOINT_FILE};
use petnn_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "petnn", version, about = "Train, evaluate and inspect energy-transition recurrent models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and write metrics, checkpoint, summary and manifest.
    Train(Common),
    /// Evaluate a checkpoint on one split of the configured data.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        sabotage_backward: bool,
    },
    /// Compare the four update variants and the four reset policies.
    Ablate(Common),
    /// Export per-step T, C, S and m for one test sequence.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Parameter and FLOP accounting plus a forward timing.
    Bench(Common),
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.resolve();
    }
    Ok(cfg)
}

/// Exit code for an error that ended a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Precondition(_) => EXIT_PRECONDITION,
        _ => EXIT_BAD_INPUT,
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Train(common) => {
            let cfg = load(&common)?;
            let outcome = run::cmd_train(&cfg)?;
            print_json(&outcome.summary);
            println!("wrote {}", cfg.out_dir.display());
            Ok(EXIT_OK)
        }
        Command::Eval { common, checkpoint, split } => {
            let cfg = load(&common)?;
            let ck = checkpoint.unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
            print_json(&run::cmd_eval(&cfg, &ck, &split)?);
            Ok(EXIT_OK)
        }
        Command::Gradcheck { common, sabotage_backward } => {
            let cfg = load(&common)?;
            let doc = run::cmd_gradcheck(&cfg, sabotage_backward)?;
            for b in &doc.report.blocks {
                let flag = if b.max_rel_error <= doc.tolerance { "ok" } else { "FAIL" };
                println!("{:<8} n={:<5} max_rel={:.3e} max_abs={:.3e} {flag}", b.name, b.len, b.max_rel_error, b.max_abs_error);
            }
            println!(
                "max relative error {:.3e} (tolerance {:.0e}, {} attempt(s))",
                doc.report.max_rel_error(),
                doc.tolerance,
                doc.report.attempts
            );
            Ok(if doc.passed { EXIT_OK } else { EXIT_ASSERTION })
        }
        Command::Ablate(common) => {
            let cfg = load(&common)?;
            let doc = run::cmd_ablate(&cfg, run::thread_cap())?;
            for r in &doc.runs {
                let test = r.test.as_ref();
                println!(
                    "{:<8} {:<20} {:<6} test_loss={} accuracy={}",
                    r.group,
                    r.name,
                    r.status,
                    test.map_or("-".into(), |m| format!("{:.6}", m.loss)),
                    test.and_then(|m| m.accuracy).map_or("-".into(), |a| format!("{a:.4}"))
                );
            }
            Ok(if doc.all_ok() { EXIT_OK } else { EXIT_ASSERTION })
        }
        Command::Trace { common, checkpoint, index } => {
            let cfg = load(&common)?;
            let ck = checkpoint.unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
            println!("wrote {}", run::cmd_trace(&cfg, &ck, index)?.display());
            Ok(EXIT_OK)
        }
        Command::Bench(common) => {
            let cfg = load(&common)?;
            print_json(&run::cmd_bench(&cfg)?);
            Ok(EXIT_OK)
        }
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
