//! Cox proportional hazards regression.
//!
//! Coefficients maximize the Efron tie-corrected log partial likelihood by
//! Newton iterations with step halving. Covariates are mean-centered before
//! fitting and the Breslow baseline cumulative hazard is defined on the
//! centered scale, so `S(t|x) = exp(-H0(t) * exp((x - means) . beta))`.

use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::{Arm, Cohort, CovariateSchema, PatientRecord};
use crate::error::{Error, Result};
use crate::predictor::RiskPredictor;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Largest allowed |beta_k| * sd_k before a fit is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieMethod {
    Efron,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Relative change in the negative log partial likelihood that stops Newton.
    pub rel_tolerance: f64,
    pub tie_method: TieMethod,
    pub step_halving_max: usize,
    /// Added to the Hessian diagonal for near-collinear designs.
    pub ridge_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 100,
            rel_tolerance: 1e-9,
            tie_method: TieMethod::Efron,
            step_halving_max: 20,
            ridge_epsilon: 1e-8,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Precondition("max_iterations must be at least 1".into()));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::Precondition("rel_tolerance must be positive".into()));
        }
        if !(self.ridge_epsilon >= 0.0) {
            return Err(Error::Precondition("ridge_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub iterations: usize,
    pub final_nlpl: f64,
    pub converged: bool,
    #[serde(default)]
    pub dropped_covariates: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// One step of the baseline cumulative hazard: `H0(t) = cum_hazard` for `t >= time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardStep {
    pub time: f64,
    pub cum_hazard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    /// Treatment arm the model was trained for; `None` when trained on both.
    #[serde(default)]
    pub arm: Option<Arm>,
    pub schema: CovariateSchema,
    pub beta: Vec<f64>,
    pub centering_means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub baseline_cum_hazard: Vec<HazardStep>,
    pub fit_info: FitInfo,
}

/// Column-major-free view of a survival design: row-major `x` of shape `n x k`.
#[derive(Clone, Debug)]
pub struct SurvivalFrame<'a> {
    pub x: &'a [f64],
    pub k: usize,
    pub time: &'a [f64],
    pub event: &'a [bool],
}

impl<'a> SurvivalFrame<'a> {
    pub fn n(&self) -> usize {
        self.time.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }
}

/// Indices sorted by time descending (stable, so ties keep input order).
fn descending_time_order(time: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    order
}

pub(crate) struct Objective {
    pub nlpl: f64,
    pub grad: Vec<f64>,
    /// Row-major `k x k`; empty unless requested.
    pub hess: Vec<f64>,
}

/// Efron negative log partial likelihood with gradient (and optionally Hessian).
pub(crate) fn efron_objective(
    frame: &SurvivalFrame<'_>,
    order: &[usize],
    beta: &[f64],
    want_hessian: bool,
) -> Objective {
    let k = frame.k;
    let n = frame.n();
    let eta: Vec<f64> = (0..n)
        .map(|i| frame.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; if want_hessian { k * k } else { 0 }];
    let mut d1 = vec![0.0; k];
    let mut d2 = vec![0.0; if want_hessian { k * k } else { 0 }];
    let mut m1 = vec![0.0; k];

    let mut ll = 0.0;
    let mut grad = vec![0.0; k];
    let mut hess = vec![0.0; if want_hessian { k * k } else { 0 }];

    let mut i = 0;
    while i < n {
        let t = frame.time[order[i]];
        let mut d = 0usize;
        let mut d0 = 0.0;
        d1.iter_mut().for_each(|v| *v = 0.0);
        d2.iter_mut().for_each(|v| *v = 0.0);
        let mut j = i;
        while j < n && frame.time[order[j]] == t {
            let r = order[j];
            let x = frame.row(r);
            let w = (eta[r] - shift).exp();
            s0 += w;
            for a in 0..k {
                s1[a] += w * x[a];
            }
            if want_hessian {
                for a in 0..k {
                    let wa = w * x[a];
                    for b in 0..k {
                        s2[a * k + b] += wa * x[b];
                    }
                }
            }
            if frame.event[r] {
                d += 1;
                d0 += w;
                ll += eta[r] - shift;
                for a in 0..k {
                    d1[a] += w * x[a];
                    grad[a] += x[a];
                }
                if want_hessian {
                    for a in 0..k {
                        let wa = w * x[a];
                        for b in 0..k {
                            d2[a * k + b] += wa * x[b];
                        }
                    }
                }
            }
            j += 1;
        }
        for l in 0..d {
            let f = l as f64 / d as f64;
            let den = s0 - f * d0;
            ll -= den.ln();
            for a in 0..k {
                m1[a] = (s1[a] - f * d1[a]) / den;
                grad[a] -= m1[a];
            }
            if want_hessian {
                for a in 0..k {
                    for b in 0..k {
                        let s = (s2[a * k + b] - f * d2[a * k + b]) / den;
                        hess[a * k + b] += s - m1[a] * m1[b];
                    }
                }
            }
        }
        i = j;
    }
    Objective {
        nlpl: -ll,
        grad: grad.into_iter().map(|g| -g).collect(),
        hess,
    }
}

/// Output of a fit on a raw design matrix.
#[derive(Clone, Debug)]
pub struct RawFit {
    pub beta: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub baseline: Vec<HazardStep>,
    pub iterations: usize,
    pub final_nlpl: f64,
    pub converged: bool,
    /// Indices of columns dropped as constant.
    pub dropped: Vec<usize>,
}

/// Fits a Cox model to a raw design. `names` labels columns in diagnostics.
pub fn fit_frame(frame: &SurvivalFrame<'_>, names: &[&str], config: &FitConfig) -> Result<RawFit> {
    config.validate()?;
    let n = frame.n();
    let k = frame.k;
    if frame.x.len() != n * k || frame.event.len() != n {
        return Err(Error::Precondition("design shape mismatch".into()));
    }
    if !frame.event.iter().any(|&e| e) {
        return Err(Error::Precondition("cohort has no events; partial likelihood is empty".into()));
    }

    let mut means = vec![0.0; k];
    let mut sds = vec![0.0; k];
    let mut active = Vec::with_capacity(k);
    let mut dropped = Vec::new();
    for c in 0..k {
        let col = (0..n).map(|i| frame.x[i * k + c]);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        means[c] = mean;
        sds[c] = var.sqrt();
        if hi > lo {
            active.push(c);
        } else {
            dropped.push(c);
        }
    }
    let ka = active.len();
    let mut xc = Vec::with_capacity(n * ka);
    for i in 0..n {
        for &c in &active {
            xc.push(frame.x[i * k + c] - means[c]);
        }
    }
    let cframe = SurvivalFrame {
        x: &xc,
        k: ka,
        time: frame.time,
        event: frame.event,
    };
    let order = descending_time_order(frame.time);

    let mut beta = vec![0.0; ka];
    let mut obj = efron_objective(&cframe, &order, &beta, true);
    let mut converged = ka == 0;
    let mut iterations = 0;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let mut h = DMatrix::from_row_slice(ka, ka, &obj.hess);
        for a in 0..ka {
            h[(a, a)] += config.ridge_epsilon;
        }
        let g = DVector::from_column_slice(&obj.grad);
        let delta = match h.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => h
                .lu()
                .solve(&(-&g))
                .ok_or_else(|| Error::Numerical("singular Hessian in Cox Newton step".into()))?,
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=config.step_halving_max {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let cobj = efron_objective(&cframe, &order, &cand, true);
            if cobj.nlpl.is_finite() && cobj.nlpl <= obj.nlpl {
                accepted = Some((cand, cobj));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cobj)) = accepted else {
            // No descent along the Newton direction: numerically at the optimum.
            converged = true;
            break;
        };
        let change = (obj.nlpl - cobj.nlpl).abs();
        let scale = obj.nlpl.abs().max(f64::MIN_POSITIVE);
        beta = cand;
        obj = cobj;
        for (a, &c) in active.iter().enumerate() {
            let z = beta[a] * sds[c];
            if z.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    covariate: names.get(c).copied().unwrap_or("?").to_string(),
                    value: z,
                });
            }
        }
        if change / scale < config.rel_tolerance {
            converged = true;
        }
    }

    let mut std_errors = vec![0.0; k];
    if ka > 0 {
        let mut h = DMatrix::from_row_slice(ka, ka, &obj.hess);
        for a in 0..ka {
            h[(a, a)] += config.ridge_epsilon;
        }
        if let Some(inv) = h.try_inverse() {
            for (a, &c) in active.iter().enumerate() {
                std_errors[c] = inv[(a, a)].max(0.0).sqrt();
            }
        }
    }

    let mut full_beta = vec![0.0; k];
    for (a, &c) in active.iter().enumerate() {
        full_beta[c] = beta[a];
    }

    // Breslow: H0(t) = sum over event times s <= t of d(s) / sum_{risk set} exp(eta).
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..ka).map(|a| xc[i * ka + a] * beta[a]).sum())
        .collect();
    let mut baseline = Vec::new();
    let mut risk_sum = 0.0;
    let mut increments = Vec::new();
    let mut i = 0;
    while i < n {
        let t = frame.time[order[i]];
        let mut d = 0usize;
        let mut j = i;
        while j < n && frame.time[order[j]] == t {
            risk_sum += eta[order[j]].exp();
            if frame.event[order[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            increments.push((t, d as f64 / risk_sum));
        }
        i = j;
    }
    let mut cum = 0.0;
    for (t, inc) in increments.into_iter().rev() {
        cum += inc;
        baseline.push(HazardStep { time: t, cum_hazard: cum });
    }

    Ok(RawFit {
        beta: full_beta,
        means,
        std_errors,
        baseline,
        iterations,
        final_nlpl: obj.nlpl,
        converged,
        dropped,
    })
}

/// Fits a Cox model on an imputed cohort.
pub fn fit(cohort: &Cohort, config: &FitConfig) -> Result<CoxModel> {
    let x = cohort.design_matrix()?;
    let time = cohort.times();
    let event = cohort.events();
    let names: Vec<&str> = cohort.schema().names().collect();
    let frame = SurvivalFrame {
        x: &x,
        k: names.len(),
        time: &time,
        event: &event,
    };
    let raw = fit_frame(&frame, &names, config)?;
    let mut warnings = Vec::new();
    let dropped_covariates: Vec<String> = raw.dropped.iter().map(|&c| names[c].to_string()).collect();
    if !dropped_covariates.is_empty() {
        let msg = format!("constant covariates dropped: {}", dropped_covariates.join(", "));
        debug!("{msg}");
        warnings.push(msg);
    }
    if !raw.converged {
        let msg = format!(
            "Cox fit did not converge within {} iterations",
            config.max_iterations
        );
        debug!("{msg}");
        warnings.push(msg);
    }
    let arms: Vec<Arm> = Arm::BOTH.into_iter().filter(|&a| cohort.count_arm(a) > 0).collect();
    Ok(CoxModel {
        format_version: MODEL_FORMAT_VERSION,
        name: String::new(),
        arm: if arms.len() == 1 { Some(arms[0]) } else { None },
        schema: cohort.schema().clone(),
        beta: raw.beta,
        centering_means: raw.means,
        std_errors: raw.std_errors,
        baseline_cum_hazard: raw.baseline,
        fit_info: FitInfo {
            iterations: raw.iterations,
            final_nlpl: raw.final_nlpl,
            converged: raw.converged,
            dropped_covariates,
            warnings,
        },
    })
}

/// Efron negative log partial likelihood and its gradient at `beta`.
pub fn nlpl_and_gradient(cohort: &Cohort, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = cohort.schema().len();
    if beta.len() != k {
        return Err(Error::Precondition(format!(
            "beta has length {}, schema has {k}",
            beta.len()
        )));
    }
    let x = cohort.design_matrix()?;
    let n = cohort.len();
    let mut means = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            means[c] += x[i * k + c] / n as f64;
        }
    }
    let xc: Vec<f64> = x.iter().enumerate().map(|(idx, v)| v - means[idx % k]).collect();
    let time = cohort.times();
    let event = cohort.events();
    let frame = SurvivalFrame {
        x: &xc,
        k,
        time: &time,
        event: &event,
    };
    let order = descending_time_order(&time);
    let obj = efron_objective(&frame, &order, beta, false);
    Ok((obj.nlpl, obj.grad))
}

/// Step-function lookup: value at the last step with `time <= t`, 0 before the first.
pub fn step_value(steps: &[HazardStep], t: f64) -> f64 {
    let idx = steps.partition_point(|s| s.time <= t);
    if idx == 0 {
        0.0
    } else {
        steps[idx - 1].cum_hazard
    }
}

impl CoxModel {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_arm(mut self, arm: Option<Arm>) -> Self {
        self.arm = arm;
        self
    }

    pub fn linear_predictor_values(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.centering_means)
            .zip(&self.beta)
            .filter(|(_, &b)| b != 0.0)
            .map(|((v, m), b)| (v - m) * b)
            .sum()
    }

    /// `(x - centering_means) . beta`.
    pub fn linear_predictor(&self, record: &PatientRecord) -> f64 {
        self.beta
            .iter()
            .zip(&self.centering_means)
            .enumerate()
            .filter(|(_, (&b, _))| b != 0.0)
            .map(|(k, (b, m))| (record.value(k) - m) * b)
            .sum()
    }

    /// Baseline cumulative hazard; constant beyond the last event time.
    pub fn baseline_at(&self, t: f64) -> f64 {
        step_value(&self.baseline_cum_hazard, t)
    }

    pub fn survival_at(&self, record: &PatientRecord, horizon_months: f64) -> f64 {
        (-self.baseline_at(horizon_months) * self.linear_predictor(record).exp()).exp()
    }

    /// `1 - S(horizon | x)`, clamped to [0, 1].
    pub fn risk_at(&self, record: &PatientRecord, horizon_months: f64) -> f64 {
        (1.0 - self.survival_at(record, horizon_months)).clamp(0.0, 1.0)
    }

    pub fn risks_at(&self, cohort: &Cohort, horizon_months: f64) -> Vec<f64> {
        let h0 = self.baseline_at(horizon_months);
        cohort
            .records()
            .iter()
            .map(|r| (1.0 - (-h0 * self.linear_predictor(r).exp()).exp()).clamp(0.0, 1.0))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<CoxModel> {
        let m: CoxModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        let k = m.schema.len();
        if m.beta.len() != k || m.centering_means.len() != k {
            return Err(Error::Schema("model coefficient lengths do not match its schema".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CoxModel> {
        CoxModel::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that `cohort` shares this model's covariate names, in order.
    pub fn check_schema(&self, cohort: &Cohort) -> Result<()> {
        if self.schema.names().ne(cohort.schema().names()) {
            return Err(Error::Schema(format!(
                "model `{}` expects covariates [{}], cohort has [{}]",
                self.name,
                self.schema.names().collect::<Vec<_>>().join(","),
                cohort.schema().names().collect::<Vec<_>>().join(",")
            )));
        }
        Ok(())
    }
}

impl RiskPredictor for CoxModel {
    fn risk(&self, record: &PatientRecord, horizon: f64) -> f64 {
        self.risk_at(record, horizon)
    }

    fn score(&self, record: &PatientRecord, _horizon: f64) -> f64 {
        self.linear_predictor(record)
    }
}
