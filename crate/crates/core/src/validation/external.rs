use std::io::Write;

use log::warn;
use serde::Serialize;

use crate::cohort::{format_real, Arm, Cohort};
use crate::cox::{self, CoxModel, FitConfig};
use crate::error::{Error, Result};
use crate::predictor::{predict_risks, predict_scores, RiskPredictor};
use crate::stratify::{assign, build_scheme, SchemePolicy, StratumScheme, DEFAULT_HORIZON};

use super::metrics::{auc_at, concordance};

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalConfig {
    pub strata: usize,
    pub policy: SchemePolicy,
    pub horizon: f64,
    pub fit: FitConfig,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            strata: 8,
            policy: SchemePolicy::PaperDefault,
            horizon: DEFAULT_HORIZON,
            fit: FitConfig::default(),
        }
    }
}

/// Metrics of one stratum; `None` where the metric is undefined for its members.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumMetrics {
    pub stratum: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub n_events: usize,
    pub harrells_c: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratifiedReport {
    pub model_name: String,
    pub scheme: StratumScheme,
    pub horizon: f64,
    /// The evaluated predictions coincide with the binning model's.
    pub self_evaluation: bool,
    pub strata: Vec<StratumMetrics>,
}

impl StratifiedReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(format_real).unwrap_or_else(|| "NA".into());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["stratum", "lo", "hi", "n", "n_events", "C", "AUC"])?;
        for s in &self.strata {
            w.write_record([
                s.stratum.to_string(),
                format_real(s.lo),
                format_real(s.hi),
                s.n.to_string(),
                s.n_events.to_string(),
                opt(s.harrells_c),
                opt(s.auc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scores `model` inside strata defined by a separate Cox model fit on the
/// external cohort itself, which is used only for binning.
///
/// C needs at least two comparable pairs in a stratum; AUC needs a case and a
/// control. Otherwise the value is reported as absent.
pub fn stratified_external_eval(
    model: &CoxModel,
    external: &Cohort,
    config: &ExternalConfig,
) -> Result<StratifiedReport> {
    if external.has_missing() {
        return Err(Error::Precondition("external cohort must be imputed".into()));
    }
    model.check_schema(external)?;
    let arms: Vec<Arm> = Arm::BOTH.into_iter().filter(|&a| external.count_arm(a) > 0).collect();
    if arms.len() != 1 {
        return Err(Error::Precondition("external cohort must contain a single arm".into()));
    }
    if let Some(a) = model.arm {
        if a != arms[0] {
            return Err(Error::Precondition(format!(
                "model `{}` was trained on arm `{a}` but the external cohort is `{}`",
                model.name, arms[0]
            )));
        }
    }
    let binning = cox::fit(external, &config.fit)?;
    let bin_risks = binning.risks_at(external, config.horizon);
    let scheme = build_scheme(config.strata, config.policy, &bin_risks)?;
    let index = assign(&bin_risks, &scheme).stratum_index;

    let risks = predict_risks(model, external, config.horizon);
    let self_evaluation = risks.iter().zip(&bin_risks).all(|(a, b)| (a - b).abs() <= 1e-12);
    if self_evaluation {
        warn!("evaluated model reproduces the binning model; per-stratum metrics are self-evaluated");
    }
    let scores = predict_scores(model as &dyn RiskPredictor, external, config.horizon);
    let times = external.times();
    let events = external.events();
    let strata = (0..scheme.n_strata())
        .map(|s| {
            let members: Vec<usize> = (0..external.len()).filter(|&i| index[i] == s).collect();
            let pick = |v: &[f64]| members.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (r, t) = (pick(&scores), pick(&times));
            let e: Vec<bool> = members.iter().map(|&i| events[i]).collect();
            let c = concordance(&r, &t, &e).ok().filter(|c| c.comparable >= 2).and_then(|c| c.index());
            let (lo, hi) = scheme.bounds(s);
            Ok(StratumMetrics {
                stratum: s,
                lo,
                hi,
                n: members.len(),
                n_events: e.iter().filter(|x| **x).count(),
                harrells_c: c,
                auc: auc_at(&r, &t, &e, config.horizon).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StratifiedReport {
        model_name: model.name.clone(),
        scheme,
        horizon: config.horizon,
        self_evaluation,
        strata,
    })
}
