use crate::cohort::{Cohort, PatientRecord};

/// Anything that turns a patient record into a horizon risk.
///
/// `score` ranks patients for discrimination metrics; it defaults to the risk
/// itself but a Cox model returns its linear predictor, which orders patients
/// identically without saturating at 1.
pub trait RiskPredictor: Send + Sync {
    fn risk(&self, record: &PatientRecord, horizon: f64) -> f64;

    fn score(&self, record: &PatientRecord, horizon: f64) -> f64 {
        self.risk(record, horizon)
    }
}

impl<P: RiskPredictor + ?Sized> RiskPredictor for Box<P> {
    fn risk(&self, record: &PatientRecord, horizon: f64) -> f64 {
        (**self).risk(record, horizon)
    }

    fn score(&self, record: &PatientRecord, horizon: f64) -> f64 {
        (**self).score(record, horizon)
    }
}

/// Predictor backed by a plain function of the record.
pub struct FnPredictor<F>(pub F);

impl<F> RiskPredictor for FnPredictor<F>
where
    F: Fn(&PatientRecord, f64) -> f64 + Send + Sync,
{
    fn risk(&self, record: &PatientRecord, horizon: f64) -> f64 {
        (self.0)(record, horizon)
    }
}

pub fn predict_risks(p: &dyn RiskPredictor, cohort: &Cohort, horizon: f64) -> Vec<f64> {
    cohort.records().iter().map(|r| p.risk(r, horizon)).collect()
}

pub fn predict_scores(p: &dyn RiskPredictor, cohort: &Cohort, horizon: f64) -> Vec<f64> {
    cohort.records().iter().map(|r| p.score(r, horizon)).collect()
}
