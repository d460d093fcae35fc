//! Stratify a two-arm cohort by untreated 60-month risk, then match arms inside each stratum.

use strata_balance::cox::FitConfig;
use strata_balance::matching::{balance_cohort, MatchingMode};
use strata_balance::stratify::{build_scheme, fit_baseline_model, SchemePolicy, StratifiedCohort};
use strata_balance::synth::{generate, SynthSpec};
use strata_balance::cohort::Arm;

fn main() -> strata_balance::Result<()> {
    let (cohort, _) = generate(&SynthSpec::paper_like(3))?;
    let baseline = fit_baseline_model(&cohort.filter_arm(Arm::SurgeryAlone), &FitConfig::default())?;
    let risks = baseline.risks_at(&cohort, 60.0);
    let scheme = build_scheme(8, SchemePolicy::PaperDefault, &risks)?;
    let stratified = StratifiedCohort::new(cohort, risks, scheme)?;

    println!("before balancing");
    for h in stratified.histogram() {
        println!("  [{:.1}, {:.1})  alone {:>4}  chemo {:>4}", h.lo, h.hi, h.count_alone, h.count_chemo);
    }
    for mode in [MatchingMode::OneToOne, MatchingMode::Relaxed] {
        let b = balance_cohort(&stratified, 25, mode)?;
        println!("\n{} (alpha 25), solved in {:.1?}", mode.label(), b.solve_time);
        for (h, s) in b.histogram().iter().zip(&b.strata) {
            println!(
                "  [{:.1}, {:.1})  alone {:>4}  chemo {:>4}  mean distance {:.3}",
                h.lo,
                h.hi,
                h.count_alone,
                h.count_chemo,
                s.result.objective / s.result.cardinality.max(1) as f64
            );
        }
    }
    Ok(())
}
