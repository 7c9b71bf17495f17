use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use v2v_core::commands::{self, Claim, CommandOutcome};
use v2v_core::config::{parse_override, parse_pairs, RunConfig};
use v2v_core::experiment::Profile;
use v2v_core::{Error, Result};

/// Vector-to-vector regression lab: corpus synthesis, feature extraction,
/// training, enhancement, evaluation and loss-theory checks.
#[derive(Debug, Parser)]
#[command(name = "v2v", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides train.seed and data.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Config override, applied after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize train and test corpora (WAVs and manifests).
    Synth,
    /// Build feature shards and statistics from a corpus.
    Features {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
    },
    /// Train a model on a features directory.
    Train {
        #[arg(long, value_name = "DIR")]
        features: PathBuf,
    },
    /// Enhance one noisy WAV.
    Enhance {
        #[arg(long, value_name = "DIR|FILE")]
        model: PathBuf,
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "WAV")]
        output: PathBuf,
    },
    /// Score models on a corpus's test split.
    Eval {
        #[arg(long, value_name = "DIR|FILE", required = true)]
        model: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
    },
    /// Run a randomized check of one claim.
    Verify {
        /// lemma1, lemma2, theorem1, rademacher or losses-equivalence.
        #[arg(value_parser = |s: &str| s.parse::<Claim>().map_err(|e| e.to_string()))]
        claim: Claim,
        /// Trained model for theorem1 (needs --features as well).
        #[arg(long, value_name = "DIR|FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        features: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let (mut pairs, fallback) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            (parse_pairs(&text)?, Profile::Desk)
        }
        None => {
            let profile = match std::env::var("V2V_PROFILE") {
                Ok(p) => p.parse::<Profile>()?,
                Err(_) => Profile::Desk,
            };
            (Vec::new(), profile)
        }
    };
    for s in &cli.set {
        pairs.push(parse_override(s)?);
    }
    let mut cfg = RunConfig::from_pairs(&pairs, fallback)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out DIR".into()))
}

fn run(cli: &Cli) -> Result<CommandOutcome> {
    let cfg = resolve_config(cli)?;
    let outcome = match &cli.command {
        Command::Synth => {
            let (outcome, digests) = commands::synth(&cfg, out_dir(cli)?)?;
            println!("{digests}");
            outcome
        }
        Command::Features { corpus } => commands::features(&cfg, corpus, out_dir(cli)?)?,
        Command::Train { features } => commands::train_model(&cfg, features, out_dir(cli)?)?,
        Command::Enhance {
            model,
            input,
            output,
        } => commands::enhance_file(&cfg, model, input, output)?,
        Command::Eval { model, corpus } => {
            let (outcome, report) = commands::eval(&cfg, model, corpus, out_dir(cli)?)?;
            if !cli.quiet {
                print!("{report}");
            }
            outcome
        }
        Command::Verify {
            claim,
            model,
            features,
        } => {
            let (outcome, suite) = commands::verify(
                &cfg,
                *claim,
                model.as_deref(),
                features.as_deref(),
                cli.out.as_deref(),
            )?;
            println!("{suite}");
            if let Some(w) = suite.worst.as_ref().filter(|_| !cli.quiet) {
                println!("{w}");
            }
            outcome
        }
    };
    if !cli.quiet {
        for a in &outcome.artifacts {
            log::debug!("wrote {}", a.display());
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(outcome)) => ExitCode::from(outcome.exit_code() as u8),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
