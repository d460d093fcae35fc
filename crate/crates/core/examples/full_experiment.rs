//! Runs the `experiment` and `validate-external` commands on a synthetic world,
//! writing into a directory given as the first argument (default `experiment_out`).

use std::path::PathBuf;

use strata_balance::pipeline::{run, AlphaSetting, Command, ExperimentConfig};

fn main() -> strata_balance::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("experiment_out"), PathBuf::from);
    let cfg = ExperimentConfig {
        out: out.clone(),
        alpha: AlphaSetting::Fixed(25),
        replicates: 50,
        ..ExperimentConfig::default()
    };
    run(Command::Experiment, &cfg)?;
    run(Command::ValidateExternal, &cfg)?;
    print!("{}", std::fs::read_to_string(out.join("internal_corrected.csv"))?);
    print!("{}", std::fs::read_to_string(out.join("external_overall.csv"))?);
    Ok(())
}
