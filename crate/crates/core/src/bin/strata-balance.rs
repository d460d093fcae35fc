use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strata_balance::pipeline::{run, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "strata-balance", version, about = "Risk-stratified arm balancing for survival prognostic models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    strata: Option<usize>,
    /// A single alpha, a comma list, or `grid`.
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// `one-to-one` or `relaxed`; repeatable.
    #[arg(long, global = true)]
    mode: Vec<String>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Extra `key=value` overrides for keys without a dedicated flag.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Fit a Cox model on the development cohort (or one arm of it).
    Fit,
    /// Stratify by untreated risk and match arms within strata.
    Balance,
    /// Generate a synthetic cohort with ground truth.
    Synth,
    /// Train Models 1, 2A/2B and 3A/3B with internal validation.
    Experiment,
    /// Per-stratum evaluation of saved models on external cohorts.
    ValidateExternal,
    /// Strata count and feature subset sweep.
    Sensitivity,
    /// Matching versus SMOTE balancing on external cohorts.
    SmoteCompare,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Fit => Command::Fit,
            Cmd::Balance => Command::Balance,
            Cmd::Synth => Command::Synth,
            Cmd::Experiment => Command::Experiment,
            Cmd::ValidateExternal => Command::ValidateExternal,
            Cmd::Sensitivity => Command::Sensitivity,
            Cmd::SmoteCompare => Command::SmoteCompare,
        }
    }
}

fn overrides(cli: &Cli) -> Result<BTreeMap<String, String>, String> {
    let mut m = BTreeMap::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("seed", cli.seed.map(|s| s.to_string()));
    put("out", cli.out.as_ref().map(|p| p.display().to_string()));
    put("strata", cli.strata.map(|s| s.to_string()));
    put("alpha", cli.alpha.clone());
    put("replicates", cli.replicates.map(|r| r.to_string()));
    if !cli.mode.is_empty() {
        put("modes", Some(cli.mode.join(",")));
    }
    Ok(m)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match overrides(&cli).map_err(strata_balance::Error::Config).and_then(|o| {
        ExperimentConfig::load(cli.config.as_deref(), &o)
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.command.into(), &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
