//! Generate a mid-heavy development cohort and print its true-risk decile histogram.
//!
//! cargo run --example synth_cohort -- [seed]

use strata_balance::cohort::Arm;
use strata_balance::synth::{generate, SynthSpec};

fn main() -> strata_balance::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = SynthSpec::paper_like(seed);
    let (cohort, truth) = generate(&spec)?;

    let mut deciles = [[0usize; 2]; 10];
    for (r, risk) in cohort.records().iter().zip(&truth.true_risk_60) {
        let d = ((risk * 10.0) as usize).min(9);
        deciles[d][(r.arm == Arm::SurgeryChemo) as usize] += 1;
    }
    println!("{} patients, {} events", cohort.len(), cohort.n_events());
    println!("true 60-month risk   alone  chemo");
    for (d, [a, c]) in deciles.iter().enumerate() {
        println!("  [{:.1}, {:.1})        {a:>5}  {c:>5}", d as f64 / 10.0, (d + 1) as f64 / 10.0);
    }
    Ok(())
}
