//! Fit an Efron Cox model on synthetic data and compare against the generating coefficients.

use strata_balance::cox::{self, FitConfig};
use strata_balance::synth::{generate, SynthSpec};
use strata_balance::validation::evaluate;

fn main() -> strata_balance::Result<()> {
    let spec = SynthSpec::paper_like(11);
    let (cohort, _) = generate(&spec)?;
    let alone = cohort.filter_arm(strata_balance::cohort::Arm::SurgeryAlone);
    let model = cox::fit(&alone, &FitConfig::default())?;

    println!("{:<14}{:>9}{:>9}{:>9}", "covariate", "true", "beta", "se");
    for (k, name) in model.schema.names().enumerate() {
        println!(
            "{name:<14}{:>9.3}{:>9.3}{:>9.3}",
            spec.beta_true[k], model.beta[k], model.std_errors[k]
        );
    }
    let r = evaluate(&model, &alone, 60.0)?;
    println!(
        "\napparent C {:.3}, AUC(60) {:.3}, ICI {:.4} after {} Newton iterations",
        r.harrells_c,
        r.auc_at_horizon,
        r.ici.unwrap_or(f64::NAN),
        model.fit_info.iterations
    );
    Ok(())
}
