//! Discrimination and calibration metrics, optimism-corrected bootstrap and
//! per-stratum external validation.

mod bootstrap;
mod external;
pub mod metrics;
mod procedures;

pub use bootstrap::{bootstrap_validate, tune_alpha, BootstrapConfig, OptimismReport, MIN_REPLICATES};
pub use external::{stratified_external_eval, ExternalConfig, StratifiedReport, StratumMetrics};
pub use metrics::{auc_at, concordance, harrells_c, ici_at, Concordance, IciResult, Recalibration};
pub use procedures::{
    BalancedCoxProcedure, CoxProcedure, FixedProcedure, SmoteCoxProcedure, TrainProcedure, Trained,
};

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::Result;
use crate::predictor::{predict_risks, predict_scores, RiskPredictor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Smallest interval containing both `self` and `x`.
    pub fn covering(self, x: f64) -> Interval {
        Interval {
            lo: self.lo.min(x),
            hi: self.hi.max(x),
        }
    }
}

/// The three headline metrics; ICI is absent for cohorts too small to smooth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub harrells_c: f64,
    pub auc: f64,
    pub ici: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub harrells_c: f64,
    pub harrells_c_ci: Option<Interval>,
    pub auc_at_horizon: f64,
    pub auc_ci: Option<Interval>,
    pub ici: Option<f64>,
    pub ici_ci: Option<Interval>,
    pub n: usize,
    pub n_events: usize,
    pub horizon: f64,
}

impl MetricReport {
    pub fn values(&self) -> MetricValues {
        MetricValues {
            harrells_c: self.harrells_c,
            auc: self.auc_at_horizon,
            ici: self.ici,
        }
    }
}

/// Raw metrics of `predictor` on `cohort`. C and AUC rank by `score`, ICI uses `risk`
/// and is computed only when asked for and the cohort is large enough.
pub fn metric_values(
    predictor: &dyn RiskPredictor,
    cohort: &Cohort,
    horizon: f64,
    with_ici: bool,
) -> Result<MetricValues> {
    let times = cohort.times();
    let events = cohort.events();
    let scores = predict_scores(predictor, cohort, horizon);
    let harrells_c = harrells_c(&scores, &times, &events)?;
    let auc = auc_at(&scores, &times, &events, horizon)?;
    let ici = if with_ici && cohort.len() >= metrics::ICI_MIN_N {
        let risks = predict_risks(predictor, cohort, horizon);
        Some(ici_at(&risks, &times, &events, horizon)?.ici)
    } else {
        None
    };
    Ok(MetricValues { harrells_c, auc, ici })
}

/// Apparent performance without intervals.
pub fn evaluate(predictor: &dyn RiskPredictor, cohort: &Cohort, horizon: f64) -> Result<MetricReport> {
    let v = metric_values(predictor, cohort, horizon, true)?;
    Ok(MetricReport {
        harrells_c: v.harrells_c,
        harrells_c_ci: None,
        auc_at_horizon: v.auc,
        auc_ci: None,
        ici: v.ici,
        ici_ci: None,
        n: cohort.len(),
        n_events: cohort.n_events(),
        horizon,
    })
}
