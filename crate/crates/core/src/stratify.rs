//! Baseline (untreated) risk estimation and prognostic strata.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cohort::{Arm, Cohort};
use crate::cox::{self, CoxModel, FitConfig};
use crate::error::{Error, Result};

/// Five years, in months.
pub const DEFAULT_HORIZON: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemePolicy {
    /// Deciles with the lowest `11 - S` deciles merged into one bin.
    PaperDefault,
    EqualWidth,
    Quantile,
}

impl SchemePolicy {
    pub fn parse(s: &str) -> Option<SchemePolicy> {
        match s {
            "paper-default" => Some(SchemePolicy::PaperDefault),
            "equal-width" => Some(SchemePolicy::EqualWidth),
            "quantile" => Some(SchemePolicy::Quantile),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchemePolicy::PaperDefault => "paper-default",
            SchemePolicy::EqualWidth => "equal-width",
            SchemePolicy::Quantile => "quantile",
        }
    }
}

/// Ordered bin edges partitioning [0, 1]; bins are `[e_i, e_{i+1})`, the last closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumScheme {
    edges: Vec<f64>,
    pub policy: SchemePolicy,
    /// Number of bins asked for; differs from `n_strata()` when quantile edges collapsed.
    pub requested: usize,
}

impl StratumScheme {
    pub fn from_edges(edges: Vec<f64>, policy: SchemePolicy) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::Precondition("edges must start at 0 and end at 1".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("edges must be strictly increasing".into()));
        }
        let requested = edges.len() - 1;
        Ok(StratumScheme {
            edges,
            policy,
            requested,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_strata(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bounds(&self, stratum: usize) -> (f64, f64) {
        (self.edges[stratum], self.edges[stratum + 1])
    }

    pub fn stratum_of(&self, risk: f64) -> usize {
        let idx = self.edges.partition_point(|&e| e <= risk);
        idx.saturating_sub(1).min(self.n_strata() - 1)
    }
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_scheme(strata: usize, policy: SchemePolicy, risks: &[f64]) -> Result<StratumScheme> {
    if !(2..=20).contains(&strata) {
        return Err(Error::Precondition(format!("number of strata must be in 2..=20, got {strata}")));
    }
    let edges = match policy {
        SchemePolicy::PaperDefault => {
            if strata > 10 {
                return Err(Error::Precondition(format!(
                    "paper-default scheme is decile based and supports at most 10 strata, got {strata}"
                )));
            }
            let mut e = vec![0.0];
            e.extend((11 - strata..=9).map(|i| i as f64 / 10.0));
            e.push(1.0);
            e
        }
        SchemePolicy::EqualWidth => (0..=strata)
            .map(|i| if i == strata { 1.0 } else { i as f64 / strata as f64 })
            .collect(),
        SchemePolicy::Quantile => {
            if risks.is_empty() {
                return Err(Error::Precondition("quantile scheme needs risks".into()));
            }
            let mut sorted = risks.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            if distinct.len() < strata {
                return Err(Error::DegenerateBins {
                    requested: strata,
                    message: format!("only {} distinct risks", distinct.len()),
                });
            }
            let mut e = vec![0.0];
            for i in 1..strata {
                let q = quantile_sorted(&sorted, i as f64 / strata as f64);
                if q > *e.last().unwrap() && q < 1.0 {
                    e.push(q);
                }
            }
            e.push(1.0);
            if e.len() < 3 {
                return Err(Error::DegenerateBins {
                    requested: strata,
                    message: "quantile edges collapsed to a single bin".into(),
                });
            }
            e
        }
    };
    let mut scheme = StratumScheme::from_edges(edges, policy)?;
    scheme.requested = strata;
    Ok(scheme)
}

/// Fits the untreated-risk model on surgery-alone patients.
pub fn fit_baseline_model(alone_cohort: &Cohort, config: &FitConfig) -> Result<CoxModel> {
    if alone_cohort.is_empty() {
        return Err(Error::EmptyArm(Arm::SurgeryAlone));
    }
    Ok(cox::fit(alone_cohort, config)?
        .with_name("baseline")
        .with_arm(Some(Arm::SurgeryAlone)))
}

/// Predicted risk at `horizon` for every patient in `all_patients` had they not
/// received chemotherapy, from a model fit on the surgery-alone cohort only.
pub fn baseline_risks(
    alone_cohort: &Cohort,
    all_patients: &Cohort,
    horizon: f64,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    if alone_cohort.schema() != all_patients.schema() {
        return Err(Error::Schema("baseline and target cohorts have different schemas".into()));
    }
    let model = fit_baseline_model(alone_cohort, config)?;
    Ok(model.risks_at(all_patients, horizon))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub stratum_index: Vec<usize>,
    pub counts: Vec<usize>,
}

pub fn assign(risks: &[f64], scheme: &StratumScheme) -> Assignment {
    let stratum_index: Vec<usize> = risks.iter().map(|&r| scheme.stratum_of(r)).collect();
    let mut counts = vec![0; scheme.n_strata()];
    for &s in &stratum_index {
        counts[s] += 1;
    }
    Assignment {
        stratum_index,
        counts,
    }
}

#[derive(Clone, Debug)]
pub struct StratifiedCohort {
    pub cohort: Cohort,
    pub risks: Vec<f64>,
    pub stratum_index: Vec<usize>,
    pub scheme: StratumScheme,
}

impl StratifiedCohort {
    pub fn new(cohort: Cohort, risks: Vec<f64>, scheme: StratumScheme) -> Result<Self> {
        if risks.len() != cohort.len() {
            return Err(Error::Precondition("one risk per record required".into()));
        }
        if let Some(r) = risks.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Precondition(format!("risk {r} outside [0, 1]")));
        }
        let stratum_index = assign(&risks, &scheme).stratum_index;
        Ok(StratifiedCohort {
            cohort,
            risks,
            stratum_index,
            scheme,
        })
    }

    /// Record indices of `arm` falling in `stratum`, in cohort order.
    pub fn members(&self, stratum: usize, arm: Arm) -> Vec<usize> {
        (0..self.cohort.len())
            .filter(|&i| self.stratum_index[i] == stratum && self.cohort.records()[i].arm == arm)
            .collect()
    }

    pub fn histogram(&self) -> Vec<HistogramRow> {
        histogram(&self.scheme, self.cohort.records().iter().zip(&self.stratum_index).map(|(r, &s)| (s, r.arm, 1)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramRow {
    pub stratum: usize,
    pub lo: f64,
    pub hi: f64,
    pub count_alone: usize,
    pub count_chemo: usize,
}

/// Per-stratum arm counts from `(stratum, arm, multiplicity)` triples.
pub fn histogram(
    scheme: &StratumScheme,
    items: impl IntoIterator<Item = (usize, Arm, usize)>,
) -> Vec<HistogramRow> {
    let mut rows: Vec<HistogramRow> = (0..scheme.n_strata())
        .map(|s| {
            let (lo, hi) = scheme.bounds(s);
            HistogramRow {
                stratum: s,
                lo,
                hi,
                count_alone: 0,
                count_chemo: 0,
            }
        })
        .collect();
    for (s, arm, m) in items {
        match arm {
            Arm::SurgeryAlone => rows[s].count_alone += m,
            Arm::SurgeryChemo => rows[s].count_chemo += m,
        }
    }
    rows
}

pub fn write_histogram<W: Write>(writer: W, rows: &[HistogramRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_default_eight() {
        let s = build_scheme(8, SchemePolicy::PaperDefault, &[]).unwrap();
        assert_eq!(s.edges(), &[0.0, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    }

    #[test]
    fn paper_default_sensitivity_family() {
        let e = |s| build_scheme(s, SchemePolicy::PaperDefault, &[]).unwrap().edges().to_vec();
        assert_eq!(e(10), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(e(9)[..3], [0.0, 0.2, 0.3]);
        assert_eq!(e(7)[..3], [0.0, 0.4, 0.5]);
        assert!(build_scheme(11, SchemePolicy::PaperDefault, &[]).is_err());
    }

    #[test]
    fn equal_width_ten() {
        let s = build_scheme(10, SchemePolicy::EqualWidth, &[]).unwrap();
        for (i, e) in s.edges().iter().enumerate() {
            assert!((e - i as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn boundaries() {
        let s = build_scheme(8, SchemePolicy::PaperDefault, &[]).unwrap();
        assert_eq!(s.stratum_of(0.0), 0);
        assert_eq!(s.stratum_of(1.0), 7);
        assert_eq!(s.stratum_of(0.3), 1);
        assert_eq!(s.stratum_of(0.2999999), 0);
        assert_eq!(s.stratum_of(0.95), 7);
    }

    #[test]
    fn quantile_degenerate() {
        let r = [0.5, 0.5, 0.5, 0.2];
        assert!(matches!(
            build_scheme(4, SchemePolicy::Quantile, &r),
            Err(Error::DegenerateBins { .. })
        ));
    }

    #[test]
    fn quantile_collapse_reduces_bins() {
        let mut r = vec![0.5; 50];
        r.extend([0.1, 0.2, 0.9, 0.95]);
        let s = build_scheme(4, SchemePolicy::Quantile, &r).unwrap();
        assert_eq!(s.requested, 4);
        assert!(s.n_strata() < 4);
    }

    #[test]
    fn counts_sum_to_n() {
        let s = build_scheme(8, SchemePolicy::PaperDefault, &[]).unwrap();
        let risks: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let a = assign(&risks, &s);
        assert_eq!(a.counts.iter().sum::<usize>(), risks.len());
        assert_eq!(a.counts[0], 30);
    }
}
