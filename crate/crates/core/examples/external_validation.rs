//! Per-stratum external validation: Model 1 versus the arm-balanced model on a
//! uniform-risk external cohort of the surgery-alone arm.

use strata_balance::cohort::Arm;
use strata_balance::cox::{self, FitConfig};
use strata_balance::matching::MatchingMode;
use strata_balance::stratify::SchemePolicy;
use strata_balance::synth::{generate, generate_arm, RiskShape, SynthSpec};
use strata_balance::validation::{stratified_external_eval, BalancedCoxProcedure, ExternalConfig, TrainProcedure};

fn main() -> strata_balance::Result<()> {
    let spec = SynthSpec::effect_modified(4);
    let (dev, _) = generate(&spec)?;
    let arm = Arm::SurgeryAlone;
    let (ext, _) = generate_arm(&spec.external(arm, 3000, RiskShape::UniformTarget, 99), arm)?;

    let model1 = cox::fit(&dev, &FitConfig::default())?.with_name("model_1");
    let balanced = BalancedCoxProcedure {
        arm,
        strata: 8,
        policy: SchemePolicy::PaperDefault,
        alpha: 50,
        mode: MatchingMode::OneToOne,
        horizon: 60.0,
        config: FitConfig::default(),
    }
    .train(&dev)?
    .model
    .expect("Cox procedure")
    .with_name("model_3a")
    .with_arm(Some(arm));

    let cfg = ExternalConfig::default();
    let r1 = stratified_external_eval(&model1, &ext, &cfg)?;
    let r3 = stratified_external_eval(&balanced, &ext, &cfg)?;
    let c = |v: Option<f64>| v.map_or("  NA ".into(), |x| format!("{x:.3}"));
    println!("stratum        n  events  C model_1  C model_3a");
    for (a, b) in r1.strata.iter().zip(&r3.strata) {
        println!(
            "[{:.1}, {:.1})  {:>5}  {:>6}      {}       {}",
            a.lo,
            a.hi,
            a.n,
            a.n_events,
            c(a.harrells_c),
            c(b.harrells_c)
        );
    }
    Ok(())
}
