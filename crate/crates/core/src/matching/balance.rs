use std::io::Write;
use std::time::{Duration, Instant};

use crate::cohort::{write_cohort, Arm, Cohort, ExtraColumn, PatientRecord};
use crate::error::{Error, Result};
use crate::stratify::{histogram, HistogramRow, StratifiedCohort, StratumScheme};

use super::{solve, standardize, MatchingMode, MatchingProblem, MatchingResult};

/// A record kept by balancing; `weight` counts its copies (relaxed mode reuse).
#[derive(Clone, Debug, PartialEq)]
pub struct BalancedRow {
    pub record: PatientRecord,
    pub stratum: usize,
    pub weight: usize,
}

#[derive(Clone, Debug)]
pub struct StratumMatch {
    pub stratum: usize,
    /// Arm playing group A (the smaller one) in this stratum.
    pub a_arm: Arm,
    pub result: MatchingResult,
}

#[derive(Clone, Debug)]
pub struct BalancedCohort {
    pub scheme: StratumScheme,
    pub alpha: usize,
    pub mode: MatchingMode,
    pub strata: Vec<StratumMatch>,
    pub alone: Vec<BalancedRow>,
    pub chemo: Vec<BalancedRow>,
    pub solve_time: Duration,
    schema: crate::cohort::CovariateSchema,
}

impl BalancedCohort {
    pub fn rows(&self, arm: Arm) -> &[BalancedRow] {
        match arm {
            Arm::SurgeryAlone => &self.alone,
            Arm::SurgeryChemo => &self.chemo,
        }
    }

    pub fn pairs_per_stratum(&self) -> Vec<usize> {
        self.strata.iter().map(|s| s.result.cardinality).collect()
    }

    /// Records per stratum for `arm`, counting copies.
    pub fn counts(&self, arm: Arm) -> Vec<usize> {
        let mut c = vec![0; self.scheme.n_strata()];
        for r in self.rows(arm) {
            c[r.stratum] += r.weight;
        }
        c
    }

    pub fn histogram(&self) -> Vec<HistogramRow> {
        histogram(
            &self.scheme,
            Arm::BOTH
                .into_iter()
                .flat_map(|a| self.rows(a).iter().map(move |r| (r.stratum, a, r.weight))),
        )
    }

    /// Training cohort for `arm`; reused records appear as repeated rows with `#k` id suffixes.
    pub fn training_cohort(&self, arm: Arm) -> Result<Cohort> {
        let mut records = Vec::new();
        for row in self.rows(arm) {
            for copy in 1..=row.weight {
                let mut r = row.record.clone();
                if copy > 1 {
                    r.id = format!("{}#{}", r.id, copy);
                }
                records.push(r);
            }
        }
        Cohort::new(
            self.schema.clone(),
            records,
            format!("balanced|arm={arm}|alpha={}|mode={}", self.alpha, self.mode.label()),
        )
    }

    /// Cohort CSV of the distinct kept records plus `source_stratum` and `weight`.
    pub fn write_arm_csv<W: Write>(&self, writer: W, arm: Arm) -> Result<()> {
        let rows = self.rows(arm);
        let cohort = Cohort::new(
            self.schema.clone(),
            rows.iter().map(|r| r.record.clone()).collect(),
            "balanced",
        )?;
        write_cohort(
            writer,
            &cohort,
            &[
                ExtraColumn {
                    name: "source_stratum",
                    values: rows.iter().map(|r| r.stratum.to_string()).collect(),
                },
                ExtraColumn {
                    name: "weight",
                    values: rows.iter().map(|r| r.weight.to_string()).collect(),
                },
            ],
        )
    }

    pub fn write_matches<W: Write>(&self, writer: W) -> Result<()> {
        super::write_matches(writer, self.strata.iter().map(|s| (s.stratum, &s.result)))
    }
}

/// Stratum-wise matching between arms, concatenated into one balanced
/// cohort per arm. Standardization uses every patient in the stratified cohort.
pub fn balance_cohort(stratified: &StratifiedCohort, alpha: usize, mode: MatchingMode) -> Result<BalancedCohort> {
    if alpha == 0 {
        return Err(Error::Precondition("alpha must be at least 1".into()));
    }
    let cohort = &stratified.cohort;
    let std = standardize(cohort)?;
    let features: Vec<Vec<f64>> = cohort.records().iter().map(|r| std.apply(&r.values())).collect();

    let start = Instant::now();
    let mut strata = Vec::with_capacity(stratified.scheme.n_strata());
    let mut alone = Vec::new();
    let mut chemo = Vec::new();
    for s in 0..stratified.scheme.n_strata() {
        let by_id = |mut v: Vec<usize>| {
            v.sort_by(|&i, &j| cohort.records()[i].id.cmp(&cohort.records()[j].id));
            v
        };
        let m_alone = by_id(stratified.members(s, Arm::SurgeryAlone));
        let m_chemo = by_id(stratified.members(s, Arm::SurgeryChemo));
        let (a_arm, a_idx, b_idx) = if m_alone.len() <= m_chemo.len() {
            (Arm::SurgeryAlone, m_alone, m_chemo)
        } else {
            (Arm::SurgeryChemo, m_chemo, m_alone)
        };
        let problem = MatchingProblem::new(
            a_idx.iter().map(|&i| features[i].clone()).collect(),
            b_idx.iter().map(|&i| features[i].clone()).collect(),
            a_idx.iter().map(|&i| cohort.records()[i].id.clone()).collect(),
            b_idx.iter().map(|&i| cohort.records()[i].id.clone()).collect(),
            alpha,
        )?;
        let result = solve(&problem, mode);

        let (a_rows, b_rows) = match a_arm {
            Arm::SurgeryAlone => (&mut alone, &mut chemo),
            Arm::SurgeryChemo => (&mut chemo, &mut alone),
        };
        let mut b_weight: Vec<usize> = vec![0; b_idx.len()];
        for p in &result.pairs {
            a_rows.push(BalancedRow {
                record: cohort.records()[a_idx[p.a]].clone(),
                stratum: s,
                weight: 1,
            });
            b_weight[p.b] += 1;
        }
        let mut seen = vec![false; b_idx.len()];
        for p in &result.pairs {
            if !seen[p.b] {
                seen[p.b] = true;
                b_rows.push(BalancedRow {
                    record: cohort.records()[b_idx[p.b]].clone(),
                    stratum: s,
                    weight: b_weight[p.b],
                });
            }
        }
        strata.push(StratumMatch {
            stratum: s,
            a_arm,
            result,
        });
    }
    let solve_time = start.elapsed();
    if alone.is_empty() {
        return Err(Error::EmptyBalanced(Arm::SurgeryAlone));
    }
    if chemo.is_empty() {
        return Err(Error::EmptyBalanced(Arm::SurgeryChemo));
    }
    Ok(BalancedCohort {
        scheme: stratified.scheme.clone(),
        alpha,
        mode,
        strata,
        alone,
        chemo,
        solve_time,
        schema: cohort.schema().clone(),
    })
}
