//! Optimism-corrected internal validation of a pooled and an arm-balanced Cox model.

use strata_balance::cohort::Arm;
use strata_balance::cox::FitConfig;
use strata_balance::matching::MatchingMode;
use strata_balance::stratify::SchemePolicy;
use strata_balance::synth::{generate, SynthSpec};
use strata_balance::validation::{
    bootstrap_validate, BalancedCoxProcedure, BootstrapConfig, CoxProcedure, TrainProcedure,
};

fn main() -> strata_balance::Result<()> {
    let (cohort, _) = generate(&SynthSpec::paper_like(8))?;
    let cfg = BootstrapConfig {
        replicates: 100,
        seed: 8,
        ..BootstrapConfig::default()
    };
    let pooled = CoxProcedure {
        arm: None,
        config: FitConfig::default(),
    };
    let balanced = BalancedCoxProcedure {
        arm: Arm::SurgeryAlone,
        strata: 8,
        policy: SchemePolicy::PaperDefault,
        alpha: 25,
        mode: MatchingMode::OneToOne,
        horizon: 60.0,
        config: FitConfig::default(),
    };
    let procs: [&dyn TrainProcedure; 2] = [&pooled, &balanced];
    for p in procs {
        let r = bootstrap_validate(p, &cohort, &cfg)?;
        let ci = r.apparent.harrells_c_ci.expect("bootstrap interval");
        println!(
            "{:<32} C {:.4} -> {:.4} (optimism {:.4}, 95% [{:.3}, {:.3}])",
            r.procedure, r.apparent.harrells_c, r.corrected.harrells_c, r.optimism.harrells_c, ci.lo, ci.hi
        );
    }
    Ok(())
}
