use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::cohort::{format_real, Arm};
use crate::cox::CoxModel;
use crate::error::{Error, Result};
use crate::matching::MatchingMode;
use crate::stratify::StratifiedCohort;
use crate::validation::{MetricReport, OptimismReport, StratifiedReport};

/// Tails need this many external events before they count.
pub const TAIL_MIN_EVENTS: usize = 20;

fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_else(|| "NA".into())
}

pub fn write_coefficients<W: Write>(writer: W, model: &CoxModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["covariate", "beta", "std_error", "hazard_ratio", "centering_mean"])?;
    for (k, name) in model.schema.names().enumerate() {
        w.write_record([
            name.to_string(),
            format_real(model.beta[k]),
            format_real(model.std_errors[k]),
            format_real(model.beta[k].exp()),
            format_real(model.centering_means[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_risks<W: Write>(writer: W, s: &StratifiedCohort) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "arm", "baseline_risk", "stratum"])?;
    for ((r, risk), st) in s.cohort.records().iter().zip(&s.risks).zip(&s.stratum_index) {
        w.write_record([r.id.clone(), r.arm.label().to_string(), format_real(*risk), st.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct InternalRow {
    pub model: String,
    pub arm: Option<Arm>,
    pub mode: Option<MatchingMode>,
    pub alpha: Option<usize>,
    pub report: OptimismReport,
}

fn metric_cells(r: &MetricReport) -> Vec<String> {
    let lo_hi = |i: Option<crate::validation::Interval>| match i {
        Some(i) => [format_real(i.lo), format_real(i.hi)],
        None => ["NA".into(), "NA".into()],
    };
    let [c_lo, c_hi] = lo_hi(r.harrells_c_ci);
    let [a_lo, a_hi] = lo_hi(r.auc_ci);
    let [i_lo, i_hi] = lo_hi(r.ici_ci);
    vec![
        format_real(r.harrells_c),
        c_lo,
        c_hi,
        format_real(r.auc_at_horizon),
        a_lo,
        a_hi,
        opt(r.ici),
        i_lo,
        i_hi,
    ]
}

/// One row per model; `corrected` picks optimism-corrected values over apparent ones.
pub fn write_internal<W: Write>(writer: W, rows: &[InternalRow], corrected: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model", "arm", "mode", "alpha", "n", "n_events", "C", "C_lo", "C_hi", "AUC", "AUC_lo", "AUC_hi", "ICI",
        "ICI_lo", "ICI_hi",
    ])?;
    for r in rows {
        let report = if corrected {
            r.report.corrected_report()
        } else {
            r.report.apparent.clone()
        };
        let mut rec = vec![
            r.model.clone(),
            r.arm.map_or("both", Arm::label).to_string(),
            r.mode.map_or("none", MatchingMode::label).to_string(),
            r.alpha.map_or("NA".into(), |a| a.to_string()),
            report.n.to_string(),
            report.n_events.to_string(),
        ];
        rec.extend(metric_cells(&report));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_overall<W: Write>(writer: W, rows: &[(String, String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "external", "n", "n_events", "C", "AUC", "ICI"])?;
    for (model, ext, r) in rows {
        w.write_record([
            model.clone(),
            ext.clone(),
            r.n.to_string(),
            r.n_events.to_string(),
            format_real(r.harrells_c),
            format_real(r.auc_at_horizon),
            opt(r.ici),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-stratum tables of several models stacked, tagged with the resampling method.
pub fn write_method_table<W: Write>(writer: W, rows: &[(&str, StratifiedReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "model", "stratum", "lo", "hi", "n", "n_events", "C", "AUC"])?;
    for (method, rep) in rows {
        for s in &rep.strata {
            w.write_record([
                method.to_string(),
                rep.model_name.clone(),
                s.stratum.to_string(),
                format_real(s.lo),
                format_real(s.hi),
                s.n.to_string(),
                s.n_events.to_string(),
                opt(s.harrells_c),
                opt(s.auc),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Lowest and highest strata with at least [`TAIL_MIN_EVENTS`] events (one entry if they coincide).
pub fn tail_strata(report: &StratifiedReport) -> Vec<usize> {
    let eligible: Vec<usize> = report
        .strata
        .iter()
        .filter(|s| s.n_events >= TAIL_MIN_EVENTS)
        .map(|s| s.stratum)
        .collect();
    match (eligible.first(), eligible.last()) {
        (Some(&a), Some(&b)) if a == b => vec![a],
        (Some(&a), Some(&b)) => vec![a, b],
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub run: String,
    pub strata: usize,
    pub subset: usize,
    pub external: String,
    pub model: String,
    pub stratum: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub n_events: usize,
    pub c_model1: Option<f64>,
    pub c_balanced: Option<f64>,
    pub tail: bool,
    /// Set on tail strata where both C values exist.
    pub win: Option<bool>,
}

/// Stratum-by-stratum comparison of a balanced model against Model 1 on one external cohort.
pub fn comparison_rows(
    run: &str,
    strata: usize,
    subset: usize,
    external: &str,
    model: &str,
    model1: &StratifiedReport,
    balanced: &StratifiedReport,
) -> Vec<ComparisonRow> {
    let tails = tail_strata(model1);
    model1
        .strata
        .iter()
        .zip(&balanced.strata)
        .map(|(a, b)| {
            let tail = tails.contains(&a.stratum);
            ComparisonRow {
                run: run.to_string(),
                strata,
                subset,
                external: external.to_string(),
                model: model.to_string(),
                stratum: a.stratum,
                lo: a.lo,
                hi: a.hi,
                n: a.n,
                n_events: a.n_events,
                c_model1: a.harrells_c,
                c_balanced: b.harrells_c,
                tail,
                win: match (tail, a.harrells_c, b.harrells_c) {
                    (true, Some(m1), Some(bal)) => Some(bal >= m1),
                    _ => None,
                },
            }
        })
        .collect()
}

pub fn write_comparison<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "run",
        "strata",
        "subset",
        "external",
        "model",
        "stratum",
        "lo",
        "hi",
        "n",
        "n_events",
        "C_model1",
        "C_balanced",
        "tail",
        "win",
    ])?;
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.strata.to_string(),
            r.subset.to_string(),
            r.external.clone(),
            r.model.clone(),
            r.stratum.to_string(),
            format_real(r.lo),
            format_real(r.hi),
            r.n.to_string(),
            r.n_events.to_string(),
            opt(r.c_model1),
            opt(r.c_balanced),
            (r.tail as u8).to_string(),
            r.win.map_or("NA".into(), |w| (w as u8).to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Weighted record count per stratum in a balanced-cohort CSV, read back from disk.
pub fn recount_balanced_csv(path: &Path) -> Result<BTreeMap<usize, usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Precondition(format!("{}: no `{name}` column", path.display())))
    };
    let (s_col, w_col) = (col("source_stratum")?, col("weight")?);
    let mut counts = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |c: usize| {
            rec[c]
                .parse::<usize>()
                .map_err(|_| Error::Precondition(format!("{}: bad integer `{}`", path.display(), &rec[c])))
        };
        *counts.entry(parse(s_col)?).or_insert(0) += parse(w_col)?;
    }
    Ok(counts)
}
