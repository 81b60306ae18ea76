//! `camo`: prepare face data, train the detector and the camouflage
//! generator, then camouflage, attack and evaluate.
//!
//! Every config key is also a flag (`train.max_steps` becomes
//! `--train.max-steps`); flags win over `--config` file values, and
//! `CAMO_SEED` overrides the file's seed.

mod commands;
mod config;
mod error;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::Baseline;
use config::{config_keys, flag_name, RunConfig, SEED_ENV};
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "camo", version, about = "Learned blending-inconsistency camouflage for face images")]
struct Cli {
    /// JSON config file; any key may also be given as a flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic face corpus with landmarks and a manifest.
    SynthCorpus {
        /// Destination directory [default: <out-dir>/data/<run-id>].
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Resize images, scale landmarks and write hull masks plus a new manifest.
    PrepareData {
        /// Destination directory [default: <out-dir>/data/<run-id>].
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Train the desk detector on reals versus pseudo-fakes.
    TrainDetector,
    /// Manage detector checkpoints.
    Detector {
        #[command(subcommand)]
        action: DetectorAction,
    },
    /// Train the camouflage generator against the frozen detector.
    Train,
    /// Camouflage the evaluation images.
    Camouflage {
        /// Use identity parameters instead of the trained generator.
        #[arg(long)]
        identity: bool,
    },
    /// Write the detector accuracy table and image-quality report.
    Evaluate,
    /// Camouflaged-set accuracy under each post-process.
    Robustness,
    /// Grad-CAM overlays for clean and camouflaged images.
    Gradcam {
        /// Maximum number of evaluation images.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Produce a comparison image set.
    Baseline {
        #[arg(value_enum)]
        kind: Baseline,
    },
}

#[derive(Subcommand, Debug)]
enum DetectorAction {
    /// Register an external detector checkpoint under a name.
    Import {
        checkpoint: PathBuf,
        #[arg(long)]
        name: String,
        /// Hide gradients from white-box tools (PGD, Grad-CAM).
        #[arg(long)]
        no_gradients: bool,
    },
}

/// `(arg id, dotted key)` for every config flag.
fn config_flags() -> Vec<(&'static str, String)> {
    config_keys()
        .into_iter()
        .map(|key| {
            let id: &'static str = Box::leak(flag_name(&key).into_boxed_str());
            (id, key)
        })
        .collect()
}

fn command_with_flags(flags: &[(&'static str, String)]) -> clap::Command {
    flags.iter().fold(Cli::command(), |cmd, (id, key)| {
        cmd.arg(
            Arg::new(*id)
                .long(*id)
                .global(true)
                .action(ArgAction::Set)
                .overrides_with(*id)
                .allow_hyphen_values(true)
                .value_name("VALUE")
                .help_heading("Config keys")
                .help(format!("Overrides `{key}`")),
        )
    })
}

fn collect_overrides(matches: &ArgMatches, flags: &[(&'static str, String)]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut m = Some(matches);
    while let Some(cur) = m {
        for (id, key) in flags {
            if cur.value_source(id) == Some(clap::parser::ValueSource::CommandLine) {
                if let Some(v) = cur.get_one::<String>(id) {
                    if !out.iter().any(|(k, _): &(String, String)| k == key) {
                        out.push((key.clone(), v.clone()));
                    }
                }
            }
        }
        m = cur.subcommand().map(|(_, sub)| sub);
    }
    out
}

fn run(cli: Cli, cfg: RunConfig) -> CliResult<()> {
    match cli.command {
        Command::SynthCorpus { dest } => commands::synth_corpus(&cfg, dest),
        Command::PrepareData { dest } => commands::prepare_data(&cfg, dest),
        Command::TrainDetector => commands::train_detector(&cfg),
        Command::Detector {
            action:
                DetectorAction::Import {
                    checkpoint,
                    name,
                    no_gradients,
                },
        } => commands::import_detector(&cfg, &checkpoint, &name, !no_gradients),
        Command::Train => commands::train(&cfg),
        Command::Camouflage { identity } => commands::camouflage(&cfg, identity),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Robustness => commands::robustness(&cfg),
        Command::Gradcam { limit } => commands::gradcam(&cfg, limit),
        Command::Baseline { kind } => commands::baseline(&cfg, kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let flags = config_flags();
    let matches = command_with_flags(&flags).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = RunConfig::resolve(cli.config.as_deref(), env_seed.as_deref(), &collect_overrides(&matches, &flags))
        .and_then(|cfg| run(cli, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
