//! Synthetic two-arm survival cohorts with known ground truth.
//!
//! Survival follows a Weibull proportional-hazards model,
//! `S(t|x) = exp(-(t/scale)^shape * exp(eta(x) + arm_effect))`, so the
//! untreated five-year risk is available in closed form. The risk histogram
//! can be shaped by choosing a target decile for each patient and
//! rejection-sampling covariates until the untreated risk lands in it.
//!
//! `eta(x) = x . beta` by default. Optional tail effect modifiers add
//! `|x . beta - tail_center| * ((x - E[x]) . tail_effects)`: covariates whose
//! prognostic weight grows with distance from the middle of the risk range.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Arm, Cohort, Covariate, CovariateKind, CovariateSchema, PatientRecord};
use crate::error::{Error, Result};
use crate::stratify::{build_scheme, SchemePolicy, DEFAULT_HORIZON};

/// Draw budget per accepted patient before a risk shape is declared infeasible.
pub const MAX_DRAWS_PER_PATIENT: u64 = 1_000_000;

/// Decile targets for the mid-heavy shape: 75% of mass in [0.4, 0.8), 5% below 0.3, 2% above 0.9.
pub const MID_HEAVY_TARGET: [f64; 10] = [0.01, 0.015, 0.025, 0.09, 0.17, 0.22, 0.21, 0.15, 0.09, 0.02];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovariateDist {
    /// Standard normal.
    Normal,
    Bernoulli { p: f64 },
    /// Levels `0..probs.len()` with the given probabilities.
    Categorical { probs: Vec<f64> },
}

impl CovariateDist {
    pub fn kind(&self) -> CovariateKind {
        match self {
            CovariateDist::Normal => CovariateKind::Numeric,
            CovariateDist::Bernoulli { .. } => CovariateKind::Binary,
            CovariateDist::Categorical { .. } => CovariateKind::Ordinal,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CovariateDist::Normal => 0.0,
            CovariateDist::Bernoulli { p } => *p,
            CovariateDist::Categorical { probs } => probs.iter().enumerate().map(|(l, p)| l as f64 * p).sum(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateDist::Normal => rng.sample(StandardNormal),
            CovariateDist::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < *p)),
            CovariateDist::Categorical { probs } => {
                let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
                let mut acc = 0.0;
                for (l, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return l as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCovariate {
    pub name: String,
    pub dist: CovariateDist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskShape {
    Natural,
    MidHeavy,
    UniformTarget,
}

impl RiskShape {
    pub fn parse(s: &str) -> Option<RiskShape> {
        match s {
            "natural" => Some(RiskShape::Natural),
            "mid-heavy" => Some(RiskShape::MidHeavy),
            "uniform-target" => Some(RiskShape::UniformTarget),
            _ => None,
        }
    }

    /// Probability of each risk decile, or `None` for the unshaped draw.
    pub fn target(self) -> Option<[f64; 10]> {
        match self {
            RiskShape::Natural => None,
            RiskShape::MidHeavy => Some(MID_HEAVY_TARGET),
            RiskShape::UniformTarget => Some([0.1; 10]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    /// Months.
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Censoring {
    pub administrative_months: f64,
    /// Exponential dropout rate per month; 0 disables dropout.
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_alone: usize,
    pub n_chemo: usize,
    pub covariates: Vec<SynthCovariate>,
    pub beta_true: Vec<f64>,
    pub treatment_log_hr: f64,
    pub baseline: Weibull,
    pub censoring: Censoring,
    pub risk_shape: RiskShape,
    pub seed: u64,
    #[serde(default)]
    pub id_prefix: String,
    /// Empty, or one coefficient per covariate.
    #[serde(default)]
    pub tail_effects: Vec<f64>,
    #[serde(default)]
    pub tail_center: f64,
    /// Empty, or one coefficient per covariate: extra centered covariate
    /// effects in the chemotherapy arm only.
    #[serde(default)]
    pub treatment_interactions: Vec<f64>,
}

impl SynthSpec {
    /// Nine prognostic covariates shaped after a resected-CRLM cohort, with
    /// the development-cohort arm sizes and a mid-heavy risk histogram.
    pub fn paper_like(seed: u64) -> SynthSpec {
        let n = |name: &str| SynthCovariate {
            name: name.into(),
            dist: CovariateDist::Normal,
        };
        let b = |name: &str, p: f64| SynthCovariate {
            name: name.into(),
            dist: CovariateDist::Bernoulli { p },
        };
        SynthSpec {
            n_alone: 602,
            n_chemo: 1197,
            covariates: vec![
                n("age"),
                n("cea"),
                n("diameter"),
                n("n_lesions"),
                SynthCovariate {
                    name: "t_category".into(),
                    dist: CovariateDist::Categorical {
                        probs: vec![0.005, 0.03, 0.14, 0.59, 0.235],
                    },
                },
                b("nodal", 0.6),
                b("extrahepatic", 0.12),
                b("margin_r1", 0.15),
                b("kras", 0.4),
            ],
            beta_true: vec![0.25, 0.3, 0.3, 0.35, 0.2, 0.35, 0.5, 0.45, 0.3],
            treatment_log_hr: -0.2,
            baseline: Weibull {
                shape: 1.2,
                scale: 150.0,
            },
            censoring: Censoring {
                administrative_months: 120.0,
                dropout_rate: 0.004,
            },
            risk_shape: RiskShape::MidHeavy,
            seed,
            id_prefix: String::new(),
            tail_effects: Vec::new(),
            tail_center: 0.0,
            treatment_interactions: Vec::new(),
        }
    }

    /// The paper-like world with treatment effect modification: in the
    /// chemotherapy arm several covariates carry different log-hazard ratios,
    /// so a model pooled over both arms is misspecified for each.
    pub fn effect_modified(seed: u64) -> SynthSpec {
        SynthSpec {
            treatment_interactions: vec![-0.3, -0.4, 0.2, 0.0, 0.0, -0.5, 0.3, 0.0, -0.4],
            ..SynthSpec::paper_like(seed)
        }
    }

    /// Same data-generating process, reshaped into an external cohort of `n`
    /// patients from `arm` only (see [`generate_arm`]).
    pub fn external(&self, arm: Arm, n: usize, risk_shape: RiskShape, seed: u64) -> SynthSpec {
        let (n_alone, n_chemo) = match arm {
            Arm::SurgeryAlone => (n, 1),
            Arm::SurgeryChemo => (1, n),
        };
        SynthSpec {
            n_alone,
            n_chemo,
            risk_shape,
            seed,
            id_prefix: format!("ext-{}-", arm.label()),
            ..self.clone()
        }
    }

    pub fn k(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.n_alone == 0 || self.n_chemo == 0 {
            return bad("both arms need at least one patient".into());
        }
        if self.beta_true.len() != self.k() {
            return bad(format!("beta_true has {} entries for {} covariates", self.beta_true.len(), self.k()));
        }
        if !self.tail_effects.is_empty() && self.tail_effects.len() != self.k() {
            return bad("tail_effects must be empty or one per covariate".into());
        }
        if !self.treatment_interactions.is_empty() && self.treatment_interactions.len() != self.k() {
            return bad("treatment_interactions must be empty or one per covariate".into());
        }
        if !(self.baseline.shape > 0.0 && self.baseline.scale > 0.0) {
            return bad("Weibull shape and scale must be positive".into());
        }
        if !(self.censoring.administrative_months > 0.0 && self.censoring.dropout_rate >= 0.0) {
            return bad("censoring parameters out of range".into());
        }
        for c in &self.covariates {
            match &c.dist {
                CovariateDist::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                    return bad(format!("Bernoulli p out of range for `{}`", c.name))
                }
                CovariateDist::Categorical { probs } if probs.is_empty() || probs.iter().any(|p| *p < 0.0) => {
                    return bad(format!("bad category probabilities for `{}`", c.name))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<CovariateSchema> {
        CovariateSchema::new(
            self.covariates
                .iter()
                .map(|c| Covariate::new(c.name.clone(), c.dist.kind()))
                .collect(),
        )
    }

    /// Untreated log-hazard multiplier for covariate vector `x`.
    pub fn log_hazard(&self, x: &[f64]) -> f64 {
        let lp: f64 = x.iter().zip(&self.beta_true).map(|(v, b)| v * b).sum();
        if self.tail_effects.is_empty() {
            return lp;
        }
        let modifier: f64 = x
            .iter()
            .zip(&self.covariates)
            .zip(&self.tail_effects)
            .map(|((v, c), d)| (v - c.dist.mean()) * d)
            .sum();
        lp + (lp - self.tail_center).abs() * modifier
    }

    /// Log-hazard shift of the chemotherapy arm for covariates `x`.
    pub fn treatment_effect(&self, x: &[f64]) -> f64 {
        self.treatment_log_hr
            + x.iter()
                .zip(&self.covariates)
                .zip(&self.treatment_interactions)
                .map(|((v, c), g)| (v - c.dist.mean()) * g)
                .sum::<f64>()
    }

    /// Untreated risk of death by `horizon` months.
    pub fn true_risk(&self, x: &[f64], horizon: f64) -> f64 {
        let h = (horizon / self.baseline.scale).powf(self.baseline.shape);
        1.0 - (-h * self.log_hazard(x).exp()).exp()
    }
}

/// Closed-form untreated five-year risk for each covariate row.
pub fn true_risks(spec: &SynthSpec, covariates: &[Vec<f64>]) -> Vec<f64> {
    covariates.iter().map(|x| spec.true_risk(x, DEFAULT_HORIZON)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<String>,
    pub true_risk_60: Vec<f64>,
    /// Under the eight-stratum paper-default scheme.
    pub true_stratum: Vec<usize>,
}

impl GroundTruth {
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "true_risk_60", "true_stratum"])?;
        for ((id, r), s) in self.ids.iter().zip(&self.true_risk_60).zip(&self.true_stratum) {
            w.write_record([id.clone(), crate::cohort::format_real(*r), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn decile(r: f64) -> usize {
    ((r * 10.0).floor() as usize).min(9)
}

fn pick_bin<R: Rng>(target: &[f64; 10], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * target.iter().sum::<f64>();
    let mut acc = 0.0;
    for (b, p) in target.iter().enumerate() {
        acc += p;
        if u < acc {
            return b;
        }
    }
    9
}

/// Generates a cohort; patient `i` draws from its own ChaCha stream, so output
/// is reproducible for a given seed and independent of generation order.
pub fn generate(spec: &SynthSpec) -> Result<(Cohort, GroundTruth)> {
    spec.validate()?;
    let schema = spec.schema()?;
    let scheme = build_scheme(8, SchemePolicy::PaperDefault, &[])?;
    let total = spec.n_alone + spec.n_chemo;
    let mut records = Vec::with_capacity(total);
    let mut truth = GroundTruth {
        ids: Vec::with_capacity(total),
        true_risk_60: Vec::with_capacity(total),
        true_stratum: Vec::with_capacity(total),
    };
    let target = spec.risk_shape.target();
    for i in 0..total {
        let arm = if i < spec.n_alone { Arm::SurgeryAlone } else { Arm::SurgeryChemo };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let bin = target.as_ref().map(|t| pick_bin(t, &mut rng));
        let mut draws = 0u64;
        let (x, risk) = loop {
            draws += 1;
            if draws > MAX_DRAWS_PER_PATIENT {
                return Err(Error::ShapeInfeasible(format!(
                    "no covariate draw reached risk decile {} after {MAX_DRAWS_PER_PATIENT} attempts",
                    bin.unwrap_or(0)
                )));
            }
            let x: Vec<f64> = spec.covariates.iter().map(|c| c.dist.sample(&mut rng)).collect();
            let r = spec.true_risk(&x, DEFAULT_HORIZON);
            if bin.is_none_or(|b| decile(r) == b) {
                break (x, r);
            }
        };
        let mut eta = spec.log_hazard(&x);
        if arm == Arm::SurgeryChemo {
            eta += spec.treatment_effect(&x);
        }
        let e: f64 = rng.sample(Exp1);
        let t_event = spec.baseline.scale * (e * (-eta).exp()).powf(1.0 / spec.baseline.shape);
        let t_drop = if spec.censoring.dropout_rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / spec.censoring.dropout_rate
        } else {
            f64::INFINITY
        };
        let t_censor = spec.censoring.administrative_months.min(t_drop);
        let event = t_event <= t_censor;
        let time = t_event.min(t_censor).max(1e-9);
        let id = format!("{}{}-{:05}", spec.id_prefix, arm.label(), i);
        truth.ids.push(id.clone());
        truth.true_risk_60.push(risk);
        truth.true_stratum.push(scheme.stratum_of(risk));
        records.push(PatientRecord::new(id, x, time, event, arm));
    }
    let provenance = format!("synthetic|seed={}|shape={:?}", spec.seed, spec.risk_shape);
    Ok((Cohort::new(schema, records, provenance)?, truth))
}

/// Generates `spec` and keeps only `arm`; the other arm's placeholder patient is dropped.
pub fn generate_arm(spec: &SynthSpec, arm: Arm) -> Result<(Cohort, GroundTruth)> {
    let (cohort, truth) = generate(spec)?;
    let keep: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.records()[i].arm == arm).collect();
    let sub = cohort.subset(&keep, format!("{}|arm={arm}", cohort.provenance()))?;
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let truth = GroundTruth {
        ids: keep.iter().map(|&i| truth.ids[i].clone()).collect(),
        true_risk_60: pick(&truth.true_risk_60),
        true_stratum: keep.iter().map(|&i| truth.true_stratum[i]).collect(),
    };
    Ok((sub, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_beta_gives_closed_form_risk() {
        let mut spec = SynthSpec::paper_like(1);
        spec.beta_true = vec![0.0; spec.k()];
        spec.risk_shape = RiskShape::Natural;
        spec.n_alone = 20;
        spec.n_chemo = 20;
        let (_, truth) = generate(&spec).unwrap();
        let expected = 1.0 - (-(60.0f64 / 150.0).powf(1.2)).exp();
        assert!(truth.true_risk_60.iter().all(|r| (r - expected).abs() < 1e-15));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let mut spec = SynthSpec::paper_like(7);
        spec.n_alone = 50;
        spec.n_chemo = 60;
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.records().iter().all(|r| r.time_months > 0.0));
    }

    #[test]
    fn risk_monotone_in_linear_predictor() {
        let spec = SynthSpec::paper_like(0);
        let mut x = vec![0.0; spec.k()];
        let r0 = spec.true_risk(&x, 60.0);
        x[0] = 1.0;
        assert!(spec.true_risk(&x, 60.0) > r0);
    }

    #[test]
    fn infeasible_shape_is_reported() {
        let mut spec = SynthSpec::paper_like(3);
        spec.beta_true = vec![0.0; spec.k()];
        spec.n_alone = 1;
        spec.n_chemo = 1;
        spec.risk_shape = RiskShape::UniformTarget;
        assert!(matches!(generate(&spec), Err(Error::ShapeInfeasible(_))));
    }
}
