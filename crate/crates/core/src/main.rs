use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pronoun_franchise::harness::commands::{self, EvalArgs, FitArgs, PredictArgs, ScenarioArgs, SimulateArgs};
use pronoun_franchise::harness::ScenarioKind;
use pronoun_franchise::Result;

#[derive(Parser)]
#[command(name = "pronoun-franchise", version, about = "Simulate, fit and evaluate pronoun-usage franchises")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a community and write events.jsonl and snapshot.json into --out.
    Simulate {
        /// Simulation config (TOML): community, steps, interventions.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a snapshot instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many steps have run in total.
        #[arg(long)]
        until: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the hierarchy to an event log with collapsed Gibbs sampling.
    Fit {
        #[arg(long)]
        events: PathBuf,
        /// Fit config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the fitted predictive for one (speaker, referent) pair.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        speaker: u32,
        #[arg(long)]
        referent: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean held-out negative log probability per reference event.
    Eval {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        heldout: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario (E1..E4) and write its metrics CSV.
    Scenario {
        /// E1-novel-form, E2-mixture, E3-revision or E4-community-contrast.
        name: Option<ScenarioKind>,
        /// Scenario config (TOML); may name the scenario itself.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate {
            config,
            resume,
            until,
            seed,
            out,
        } => commands::simulate(&SimulateArgs {
            config,
            resume,
            until,
            seed,
            out,
        }),
        Command::Fit {
            events,
            config,
            seed,
            out,
        } => commands::fit(&FitArgs {
            events,
            config,
            seed,
            out,
        }),
        Command::Predict {
            fit,
            speaker,
            referent,
            out,
        } => commands::predict(
            &PredictArgs {
                fit,
                speaker,
                referent,
                out,
            },
            stdout,
        ),
        Command::Eval { fit, heldout, out } => commands::eval(&EvalArgs { fit, heldout, out }, stdout),
        Command::Scenario {
            name,
            config,
            seed,
            replicates,
            out,
        } => commands::scenario(
            &ScenarioArgs {
                name,
                config,
                seed,
                replicates,
                out,
            },
            stdout,
        ),
    }
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
