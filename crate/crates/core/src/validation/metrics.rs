use log::{debug, warn};
use serde::Serialize;

use crate::cox::{fit_frame, step_value, FitConfig, SurvivalFrame};
use crate::error::{Error, Result};
use crate::km::KaplanMeier;
use crate::stratify::quantile_sorted;

/// Minimum sample size for the calibration smoother.
pub const ICI_MIN_N: usize = 50;

fn check_lengths(risks: &[f64], times: &[f64], events: &[bool]) -> Result<()> {
    if risks.len() != times.len() || times.len() != events.len() {
        return Err(Error::Precondition("risks, times and events differ in length".into()));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Precondition("non-finite risk".into()));
    }
    Ok(())
}

/// Pair counts behind Harrell's C. A pair is comparable when the earlier time is an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Concordance {
    pub concordant: u64,
    pub tied: u64,
    pub comparable: u64,
}

impl Concordance {
    pub fn index(&self) -> Option<f64> {
        (self.comparable > 0).then(|| (2 * self.concordant + self.tied) as f64 / (2 * self.comparable) as f64)
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i &= i - 1;
        }
        s
    }
}

/// O(n log n) pair counting: sweep times downwards, keeping later patients in a
/// Fenwick tree over risk ranks.
pub fn concordance(risks: &[f64], times: &[f64], events: &[bool]) -> Result<Concordance> {
    check_lengths(risks, times, events)?;
    let n = risks.len();
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank: Vec<usize> = risks.iter().map(|r| sorted.partition_point(|v| v < r)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick(vec![0; sorted.len() + 1]);
    let mut inserted = 0u64;
    let mut out = Concordance::default();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && times[order[j]] == times[order[i]] {
            j += 1;
        }
        for &p in &order[i..j] {
            if events[p] {
                let below = tree.prefix(rank[p]);
                let at = tree.prefix(rank[p] + 1) - below;
                out.concordant += below;
                out.tied += at;
                out.comparable += inserted;
            }
        }
        for &p in &order[i..j] {
            tree.add(rank[p]);
            inserted += 1;
        }
        i = j;
    }
    Ok(out)
}

/// Harrell's C: higher risk should mean earlier death; tied risks score one half.
pub fn harrells_c(risks: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    concordance(risks, times, events)?
        .index()
        .ok_or_else(|| Error::UndefinedMetric("Harrell's C has no comparable pairs".into()))
}

/// Cumulative/dynamic AUC at `horizon` with inverse-probability-of-censoring weights.
///
/// Cases are events at or before the horizon, weighted by `1 / G(t_i-)`;
/// controls are anyone still under observation after it, sharing weight `1 / G(horizon)`.
pub fn auc_at(risks: &[f64], times: &[f64], events: &[bool], horizon: f64) -> Result<f64> {
    check_lengths(risks, times, events)?;
    let g = KaplanMeier::censoring(times, events);
    let mut controls: Vec<f64> = (0..risks.len()).filter(|&i| times[i] > horizon).map(|i| risks[i]).collect();
    if controls.is_empty() {
        return Err(Error::UndefinedMetric(format!("no controls beyond horizon {horizon}")));
    }
    controls.sort_by(f64::total_cmp);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..risks.len()).filter(|&i| events[i] && times[i] <= horizon) {
        let w = 1.0 / g.survival_before(times[i]);
        let below = controls.partition_point(|&c| c < risks[i]);
        let upto = controls.partition_point(|&c| c <= risks[i]);
        num += w * (below as f64 + 0.5 * (upto - below) as f64);
        den += w;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(format!("no cases by horizon {horizon}")));
    }
    Ok(num / (den * controls.len() as f64))
}

/// How the calibration curve was smoothed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recalibration {
    Spline,
    Linear,
    /// Predictions were constant; the observed risk is the Kaplan-Meier estimate.
    InterceptOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IciResult {
    pub ici: f64,
    pub smoothed: Vec<f64>,
    pub method: Recalibration,
}

fn cloglog(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (-(1.0 - p).ln()).ln()
}

/// Restricted cubic spline basis (linear beyond the boundary knots): `x` and
/// `knots.len() - 2` nonlinear terms, each scaled by the squared knot span.
pub fn rcs_basis(x: f64, knots: &[f64]) -> Vec<f64> {
    let m = knots.len();
    let (tk, tk1) = (knots[m - 1], knots[m - 2]);
    let scale = (tk - knots[0]).powi(2);
    let cube = |v: f64| v.max(0.0).powi(3);
    let mut out = vec![x];
    for &tj in &knots[..m - 2] {
        let v = cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1) + cube(x - tk) * (tk1 - tj) / (tk - tk1);
        out.push(v / scale);
    }
    out
}

fn recalibrated(columns: &[Vec<f64>], times: &[f64], events: &[bool], horizon: f64) -> Result<Vec<f64>> {
    let k = columns[0].len();
    let x: Vec<f64> = columns.iter().flatten().copied().collect();
    let frame = SurvivalFrame {
        x: &x,
        k,
        time: times,
        event: events,
    };
    let names: Vec<String> = (0..k).map(|j| format!("s{j}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let fit = fit_frame(&frame, &names, &FitConfig::default())?;
    let h0 = step_value(&fit.baseline, horizon);
    Ok(columns
        .iter()
        .map(|row| {
            let lp: f64 = row.iter().zip(&fit.means).zip(&fit.beta).map(|((v, m), b)| (v - m) * b).sum();
            1.0 - (-h0 * lp.exp()).exp()
        })
        .collect())
}

/// Integrated calibration index at `horizon`: mean absolute gap between each
/// prediction and the smoothed observed risk from a Cox recalibration on a
/// restricted cubic spline of `cloglog(risk)` with knots at the minimum,
/// quartiles and maximum.
///
/// Falls back to a linear term when knots coincide or the spline fit fails,
/// and to the Kaplan-Meier risk when predictions are constant.
pub fn ici_at(risks: &[f64], times: &[f64], events: &[bool], horizon: f64) -> Result<IciResult> {
    check_lengths(risks, times, events)?;
    if risks.len() < ICI_MIN_N {
        return Err(Error::Precondition(format!(
            "ICI needs at least {ICI_MIN_N} patients, got {}",
            risks.len()
        )));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::UndefinedMetric("ICI needs at least one event".into()));
    }
    let z: Vec<f64> = risks.iter().map(|&r| cloglog(r)).collect();
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);

    let finish = |smoothed: Vec<f64>, method| {
        let ici = risks.iter().zip(&smoothed).map(|(r, s)| (r - s).abs()).sum::<f64>() / risks.len() as f64;
        Ok(IciResult { ici, smoothed, method })
    };

    if sorted[0] == sorted[sorted.len() - 1] {
        warn!("constant predictions; ICI uses intercept-only recalibration");
        let observed = 1.0 - KaplanMeier::fit(times, events).survival_at(horizon);
        return finish(vec![observed; risks.len()], Recalibration::InterceptOnly);
    }
    let knots: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&p| quantile_sorted(&sorted, p)).collect();
    if knots.windows(2).all(|w| w[1] > w[0]) {
        let columns: Vec<Vec<f64>> = z.iter().map(|&v| rcs_basis(v, &knots)).collect();
        match recalibrated(&columns, times, events, horizon) {
            Ok(s) => return finish(s, Recalibration::Spline),
            Err(e) => debug!("spline recalibration failed ({e}); using a linear term"),
        }
    }
    let columns: Vec<Vec<f64>> = z.iter().map(|&v| vec![v]).collect();
    finish(recalibrated(&columns, times, events, horizon)?, Recalibration::Linear)
}
