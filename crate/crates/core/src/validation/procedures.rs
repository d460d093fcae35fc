use std::sync::Arc;

use crate::cohort::{Arm, Cohort};
use crate::cox::{self, CoxModel, FitConfig};
use crate::error::{Error, Result};
use crate::matching::{balance_cohort, standardize, BalancedCohort, MatchingMode};
use crate::predictor::RiskPredictor;
use crate::smote::{smote_balance, SmoteConfig};
use crate::stratify::{build_scheme, fit_baseline_model, SchemePolicy, StratifiedCohort};

/// Output of a training procedure: the predictor and the cohort it reports
/// apparent performance on.
#[derive(Clone)]
pub struct Trained {
    pub predictor: Arc<dyn RiskPredictor>,
    pub eval: Cohort,
    pub model: Option<CoxModel>,
}

impl Trained {
    fn from_model(model: CoxModel, eval: Cohort) -> Trained {
        Trained {
            predictor: Arc::new(model.clone()),
            eval,
            model: Some(model),
        }
    }
}

/// Everything from raw cohort to fitted model, so the bootstrap can replay it per replicate.
pub trait TrainProcedure: Send + Sync {
    fn name(&self) -> String;
    fn train(&self, cohort: &Cohort) -> Result<Trained>;
}

fn arm_part(cohort: &Cohort, arm: Arm) -> Result<Cohort> {
    let part = cohort.filter_arm(arm);
    if part.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    Ok(part)
}

/// Plain Cox fit on the whole cohort (`arm = None`) or one arm.
#[derive(Clone, Debug)]
pub struct CoxProcedure {
    pub arm: Option<Arm>,
    pub config: FitConfig,
}

impl TrainProcedure for CoxProcedure {
    fn name(&self) -> String {
        match self.arm {
            None => "cox-all".into(),
            Some(a) => format!("cox-{a}"),
        }
    }

    fn train(&self, cohort: &Cohort) -> Result<Trained> {
        let data = match self.arm {
            None => cohort.clone(),
            Some(a) => arm_part(cohort, a)?,
        };
        let model = cox::fit(&data, &self.config)?.with_name(self.name());
        Ok(Trained::from_model(model, data))
    }
}

/// Stratify by untreated risk, match arms within strata, then fit on one arm's
/// balanced training set. Performance is reported on the arm's full input
/// records, so models trained with different alphas share one evaluation set.
#[derive(Clone, Debug)]
pub struct BalancedCoxProcedure {
    pub arm: Arm,
    pub strata: usize,
    pub policy: SchemePolicy,
    pub alpha: usize,
    pub mode: MatchingMode,
    pub horizon: f64,
    pub config: FitConfig,
}

impl BalancedCoxProcedure {
    pub fn stratify(&self, cohort: &Cohort) -> Result<StratifiedCohort> {
        let alone = arm_part(cohort, Arm::SurgeryAlone)?;
        let baseline = fit_baseline_model(&alone, &self.config)?;
        let risks = baseline.risks_at(cohort, self.horizon);
        let scheme = build_scheme(self.strata, self.policy, &risks)?;
        StratifiedCohort::new(cohort.clone(), risks, scheme)
    }

    pub fn balance(&self, cohort: &Cohort) -> Result<BalancedCohort> {
        balance_cohort(&self.stratify(cohort)?, self.alpha, self.mode)
    }
}

impl TrainProcedure for BalancedCoxProcedure {
    fn name(&self) -> String {
        format!("balanced-{}-{}-a{}", self.arm, self.mode.label(), self.alpha)
    }

    fn train(&self, cohort: &Cohort) -> Result<Trained> {
        let training = self.balance(cohort)?.training_cohort(self.arm)?;
        let model = cox::fit(&training, &self.config)?.with_name(self.name());
        Ok(Trained::from_model(model, arm_part(cohort, self.arm)?))
    }
}

/// SMOTE-oversampled single-arm fit; evaluated on the arm's real records only.
#[derive(Clone, Debug)]
pub struct SmoteCoxProcedure {
    pub arm: Arm,
    pub smote: SmoteConfig,
    pub config: FitConfig,
}

impl TrainProcedure for SmoteCoxProcedure {
    fn name(&self) -> String {
        format!("smote-{}", self.arm)
    }

    fn train(&self, cohort: &Cohort) -> Result<Trained> {
        let std = standardize(cohort)?;
        let part = arm_part(cohort, self.arm)?;
        let resampled = smote_balance(&part, &self.smote, &std)?;
        let model = cox::fit(&resampled.cohort, &self.config)?.with_name(self.name());
        Ok(Trained::from_model(model, part))
    }
}

/// Ignores the data: always returns the same predictor.
#[derive(Clone)]
pub struct FixedProcedure {
    pub predictor: Arc<dyn RiskPredictor>,
    pub arm: Option<Arm>,
}

impl TrainProcedure for FixedProcedure {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn train(&self, cohort: &Cohort) -> Result<Trained> {
        let eval = match self.arm {
            None => cohort.clone(),
            Some(a) => arm_part(cohort, a)?,
        };
        Ok(Trained {
            predictor: Arc::clone(&self.predictor),
            eval,
            model: None,
        })
    }
}
