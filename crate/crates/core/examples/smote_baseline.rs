//! SMOTE oversampling of the event/censored minority within each arm.

use strata_balance::smote::{smote_by_arm, SmoteConfig};
use strata_balance::synth::{generate, SynthSpec};

fn main() -> strata_balance::Result<()> {
    let (cohort, _) = generate(&SynthSpec::paper_like(21))?;
    for (arm, r) in smote_by_arm(&cohort, &SmoteConfig::default())? {
        let real = r.cohort.len() - r.n_synthetic();
        println!(
            "{arm}: {real} real + {} synthetic records, events {} / censored {}",
            r.n_synthetic(),
            r.cohort.n_events(),
            r.cohort.len() - r.cohort.n_events()
        );
    }
    Ok(())
}
