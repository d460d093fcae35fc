//! Survival cohorts with two treatment arms: schema, records, CSV ingestion,
//! and median/mode imputation.
//!
//! The CSV layout is `id,time_months,event,arm,<covariates...>`. Covariate
//! columns may appear in any order; they are reordered to schema order on
//! load. An empty cell is a missing value. Rows with a missing `time_months`,
//! `event` or `arm` are not eligible and are dropped (and counted).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed columns every cohort CSV carries.
pub const FIXED_COLUMNS: [&str; 4] = ["id", "time_months", "event", "arm"];

/// Columns written by other artifacts that may be present and are ignored on load.
pub const AUXILIARY_COLUMNS: [&str; 3] = ["source_stratum", "weight", "synthetic"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    SurgeryAlone,
    SurgeryChemo,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::SurgeryAlone, Arm::SurgeryChemo];

    /// CSV label (`alone` / `chemo`).
    pub fn label(self) -> &'static str {
        match self {
            Arm::SurgeryAlone => "alone",
            Arm::SurgeryChemo => "chemo",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s {
            "alone" => Some(Arm::SurgeryAlone),
            "chemo" => Some(Arm::SurgeryChemo),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::SurgeryAlone => Arm::SurgeryChemo,
            Arm::SurgeryChemo => Arm::SurgeryAlone,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Numeric,
    Binary,
    /// Ordered categories entering models as a single numeric score.
    Ordinal,
}

impl CovariateKind {
    pub fn label(self) -> &'static str {
        match self {
            CovariateKind::Numeric => "numeric",
            CovariateKind::Binary => "binary",
            CovariateKind::Ordinal => "ordinal",
        }
    }

    pub fn parse(s: &str) -> Option<CovariateKind> {
        match s.trim() {
            "numeric" => Some(CovariateKind::Numeric),
            "binary" => Some(CovariateKind::Binary),
            "ordinal" | "ordinal-categorical" => Some(CovariateKind::Ordinal),
            _ => None,
        }
    }

    pub fn is_discrete(self) -> bool {
        !matches!(self, CovariateKind::Numeric)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn new(name: impl Into<String>, kind: CovariateKind) -> Self {
        Covariate {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered list of covariates; record vectors index by this order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Covariate>", into = "Vec<Covariate>")]
pub struct CovariateSchema {
    entries: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<Covariate>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &entries {
            if c.name.trim().is_empty() {
                return Err(Error::Schema("covariate names must be non-empty".into()));
            }
            if FIXED_COLUMNS.contains(&c.name.as_str())
                || AUXILIARY_COLUMNS.contains(&c.name.as_str())
            {
                return Err(Error::Schema(format!(
                    "covariate name `{}` collides with a reserved column",
                    c.name
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate covariate `{}`", c.name)));
            }
        }
        Ok(CovariateSchema { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Covariate] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.name.as_str())
    }

    pub fn name(&self, k: usize) -> &str {
        &self.entries[k].name
    }

    pub fn kind(&self, k: usize) -> CovariateKind {
        self.entries[k].kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.name == name)
    }

    /// Sub-schema restricted to `names` (in the given order) plus the source indices.
    pub fn select(&self, names: &[&str]) -> Result<(CovariateSchema, Vec<usize>)> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            idx.push(
                self.index_of(n)
                    .ok_or_else(|| Error::Schema(format!("unknown covariate `{n}`")))?,
            );
        }
        let schema = CovariateSchema::new(idx.iter().map(|&i| self.entries[i].clone()).collect())?;
        Ok((schema, idx))
    }

    /// Reads a `name,kind` CSV schema file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let name = row.get(0).unwrap_or("").to_string();
            let kind_s = row.get(1).unwrap_or("");
            let kind = CovariateKind::parse(kind_s).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: "kind".into(),
                message: format!("unknown covariate kind `{kind_s}`"),
            })?;
            entries.push(Covariate { name, kind });
        }
        Self::new(entries)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "kind"])?;
        for c in &self.entries {
            w.write_record([c.name.as_str(), c.kind.label()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl TryFrom<Vec<Covariate>> for CovariateSchema {
    type Error = Error;
    fn try_from(v: Vec<Covariate>) -> Result<Self> {
        CovariateSchema::new(v)
    }
}

impl From<CovariateSchema> for Vec<Covariate> {
    fn from(s: CovariateSchema) -> Self {
        s.entries
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Schema-ordered values; `None` marks a missing cell.
    pub covariates: Vec<Option<f64>>,
    pub time_months: f64,
    pub event: bool,
    pub arm: Arm,
}

impl PatientRecord {
    pub fn new(
        id: impl Into<String>,
        covariates: Vec<f64>,
        time_months: f64,
        event: bool,
        arm: Arm,
    ) -> Self {
        PatientRecord {
            id: id.into(),
            covariates: covariates.into_iter().map(Some).collect(),
            time_months,
            event,
            arm,
        }
    }

    /// Value of covariate `k`; NaN when missing.
    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        self.covariates[k].unwrap_or(f64::NAN)
    }

    pub fn has_missing(&self) -> bool {
        self.covariates.iter().any(Option::is_none)
    }

    /// Dense covariate vector; missing values become NaN.
    pub fn values(&self) -> Vec<f64> {
        self.covariates.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    schema: CovariateSchema,
    records: Vec<PatientRecord>,
    provenance: String,
}

impl Cohort {
    pub fn new(
        schema: CovariateSchema,
        records: Vec<PatientRecord>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if r.covariates.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "record `{}` has {} covariates, schema has {}",
                    r.id,
                    r.covariates.len(),
                    schema.len()
                )));
            }
            if !(r.time_months.is_finite() && r.time_months > 0.0) {
                return Err(Error::Precondition(format!(
                    "record `{}` has non-positive or non-finite time {}",
                    r.id, r.time_months
                )));
            }
            if r.covariates.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!(
                    "record `{}` has a non-finite covariate",
                    r.id
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id `{}`", r.id)));
            }
        }
        Ok(Cohort {
            schema,
            records,
            provenance: provenance.into(),
        })
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PatientRecord> {
        self.records
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn count_arm(&self, arm: Arm) -> usize {
        self.records.iter().filter(|r| r.arm == arm).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time_months).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.records.iter().any(PatientRecord::has_missing)
    }

    /// Row-major `n x K` covariate matrix; fails if any value is missing.
    pub fn design_matrix(&self) -> Result<Vec<f64>> {
        let k = self.schema.len();
        let mut out = Vec::with_capacity(self.len() * k);
        for r in &self.records {
            for (j, v) in r.covariates.iter().enumerate() {
                out.push(v.ok_or_else(|| {
                    Error::Precondition(format!(
                        "record `{}` is missing `{}`; impute first",
                        r.id,
                        self.schema.name(j)
                    ))
                })?);
            }
        }
        debug_assert_eq!(out.len(), self.len() * k);
        Ok(out)
    }

    /// Records at `indices`, in that order. Indices must be distinct.
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Result<Cohort> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Cohort::new(self.schema.clone(), records, provenance)
    }

    pub fn filter_arm(&self, arm: Arm) -> Cohort {
        Cohort {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| r.arm == arm).cloned().collect(),
            provenance: format!("{}|arm={}", self.provenance, arm),
        }
    }

    /// Draws with replacement: repeated picks get `#k` id suffixes to keep ids unique.
    pub fn resample(&self, indices: &[usize], provenance: impl Into<String>) -> Cohort {
        let mut seen: HashMap<usize, usize> = HashMap::with_capacity(indices.len());
        let records = indices
            .iter()
            .map(|&i| {
                let n = seen.entry(i).or_insert(0);
                *n += 1;
                let mut r = self.records[i].clone();
                if *n > 1 {
                    r.id = format!("{}#{}", r.id, n);
                }
                r
            })
            .collect();
        Cohort {
            schema: self.schema.clone(),
            records,
            provenance: provenance.into(),
        }
    }

    /// Projects onto a subset of covariates (in the given order).
    pub fn select_covariates(&self, names: &[&str]) -> Result<Cohort> {
        let (schema, idx) = self.schema.select(names)?;
        let records = self
            .records
            .iter()
            .map(|r| PatientRecord {
                covariates: idx.iter().map(|&i| r.covariates[i]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(Cohort {
            schema,
            records,
            provenance: format!("{}|features={}", self.provenance, names.join("+")),
        })
    }

    /// Concatenates cohorts sharing a schema.
    pub fn concat(parts: &[&Cohort], provenance: impl Into<String>) -> Result<Cohort> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Precondition("nothing to concatenate".into()))?;
        let mut records = Vec::new();
        for p in parts {
            if p.schema != first.schema {
                return Err(Error::Schema("cannot concatenate cohorts with different schemas".into()));
            }
            records.extend(p.records.iter().cloned());
        }
        Cohort::new(first.schema.clone(), records, provenance)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Cohort {
        self.provenance = provenance.into();
        self
    }
}

/// Result of reading a cohort CSV.
#[derive(Clone, Debug)]
pub struct LoadOutcome {
    pub cohort: Cohort,
    /// Rows dropped because `time_months`, `event` or `arm` was empty.
    pub excluded_rows: usize,
}

pub fn load_cohort(path: impl AsRef<Path>, schema: &CovariateSchema) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_cohort(file, schema, path.display().to_string())
}

/// Parses cohort CSV from any reader. Row numbers in errors are 1-based data rows.
pub fn read_cohort<R: Read>(
    reader: R,
    schema: &CovariateSchema,
    provenance: impl Into<String>,
) -> Result<LoadOutcome> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col_of: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if col_of.insert(h, i).is_some() {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let fixed_col = |name: &str| {
        col_of
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let c_id = fixed_col("id")?;
    let c_time = fixed_col("time_months")?;
    let c_event = fixed_col("event")?;
    let c_arm = fixed_col("arm")?;
    let cov_cols = schema
        .names()
        .map(|n| {
            col_of
                .get(n)
                .copied()
                .ok_or_else(|| Error::Schema(format!("missing covariate column `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    for h in headers.iter() {
        let known = FIXED_COLUMNS.contains(&h)
            || AUXILIARY_COLUMNS.contains(&h)
            || schema.index_of(h).is_some();
        if !known {
            return Err(Error::Schema(format!("unexpected column `{h}`")));
        }
    }

    let parse_real = |row: usize, column: &str, cell: &str| -> Result<f64> {
        let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{cell}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                column: column.to_string(),
                message: format!("`{cell}` is not finite"),
            });
        }
        Ok(v)
    };

    let mut records = Vec::new();
    let mut excluded = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let (time_s, event_s, arm_s) = (cell(c_time), cell(c_event), cell(c_arm));
        if time_s.trim().is_empty() || event_s.trim().is_empty() || arm_s.trim().is_empty() {
            excluded += 1;
            continue;
        }
        let time_months = parse_real(row, "time_months", time_s)?;
        if time_months <= 0.0 {
            return Err(Error::Parse {
                row,
                column: "time_months".into(),
                message: format!("follow-up time must be positive, got {time_months}"),
            });
        }
        let event = match event_s.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "event".into(),
                    message: format!("event must be 0 or 1, got `{other}`"),
                })
            }
        };
        let arm = Arm::parse(arm_s.trim()).ok_or_else(|| {
            Error::Schema(format!("row {row}: unknown arm label `{arm_s}` (expected alone|chemo)"))
        })?;
        let mut covariates = Vec::with_capacity(schema.len());
        for (k, &c) in cov_cols.iter().enumerate() {
            let s = cell(c);
            covariates.push(if s.trim().is_empty() {
                None
            } else {
                Some(parse_real(row, schema.name(k), s)?)
            });
        }
        records.push(PatientRecord {
            id: cell(c_id).to_string(),
            covariates,
            time_months,
            event,
            arm,
        });
    }
    let cohort = Cohort::new(schema.clone(), records, provenance)?;
    Ok(LoadOutcome {
        cohort,
        excluded_rows: excluded,
    })
}

/// An additional column appended after the covariates.
pub struct ExtraColumn<'a> {
    pub name: &'a str,
    pub values: Vec<String>,
}

pub fn write_cohort<W: Write>(writer: W, cohort: &Cohort, extra: &[ExtraColumn<'_>]) -> Result<()> {
    for e in extra {
        if e.values.len() != cohort.len() {
            return Err(Error::Precondition(format!(
                "extra column `{}` has {} values for {} records",
                e.name,
                e.values.len(),
                cohort.len()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(cohort.schema().names());
    header.extend(extra.iter().map(|e| e.name));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, r) in cohort.records().iter().enumerate() {
        row.clear();
        row.push(r.id.clone());
        row.push(format_real(r.time_months));
        row.push(if r.event { "1" } else { "0" }.into());
        row.push(r.arm.label().into());
        for v in &r.covariates {
            row.push(v.map(format_real).unwrap_or_default());
        }
        for e in extra {
            row.push(e.values[i].clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_cohort(path: impl AsRef<Path>, cohort: &Cohort, extra: &[ExtraColumn<'_>]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cohort(file, cohort, extra)
}

/// Shortest decimal representation that round-trips to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationEntry {
    pub covariate: String,
    pub missing_count: usize,
    pub fill_value: f64,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub entries: Vec<ImputationEntry>,
}

impl ImputationReport {
    pub fn total_missing(&self) -> usize {
        self.entries.iter().map(|e| e.missing_count).sum()
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Most frequent value; ties go to the smallest value.
fn mode(sorted: &[f64]) -> f64 {
    let mut best = sorted[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        if j - i > best_count {
            best = v;
            best_count = j - i;
        }
        i = j;
    }
    best
}

/// Fills missing numeric covariates with the observed median and discrete
/// ones with the observed mode.
pub fn impute(cohort: &Cohort) -> Result<(Cohort, ImputationReport)> {
    if cohort.is_empty() {
        return Err(Error::Precondition("cannot impute an empty cohort".into()));
    }
    let schema = cohort.schema();
    let mut entries = Vec::with_capacity(schema.len());
    let mut fills = Vec::with_capacity(schema.len());
    for k in 0..schema.len() {
        let mut observed: Vec<f64> = cohort.records().iter().filter_map(|r| r.covariates[k]).collect();
        if observed.is_empty() {
            return Err(Error::Unimputable(schema.name(k).to_string()));
        }
        observed.sort_by(f64::total_cmp);
        let kind = schema.kind(k);
        let (fill, method) = if kind.is_discrete() {
            (mode(&observed), "mode")
        } else {
            (median(&observed), "median")
        };
        entries.push(ImputationEntry {
            covariate: schema.name(k).to_string(),
            missing_count: cohort.len() - observed.len(),
            fill_value: fill,
            method: method.into(),
        });
        fills.push(fill);
    }
    let records = cohort
        .records()
        .iter()
        .map(|r| PatientRecord {
            covariates: r
                .covariates
                .iter()
                .zip(&fills)
                .map(|(v, &f)| Some(v.unwrap_or(f)))
                .collect(),
            ..r.clone()
        })
        .collect();
    let provenance = if cohort.has_missing() {
        format!("{}|imputed", cohort.provenance())
    } else {
        cohort.provenance().to_string()
    };
    Ok((
        Cohort {
            schema: schema.clone(),
            records,
            provenance,
        },
        ImputationReport { entries },
    ))
}

/// Splits into (surgery-alone, surgery+chemo) subcohorts.
pub fn split_by_arm(cohort: &Cohort) -> Result<(Cohort, Cohort)> {
    let alone = cohort.filter_arm(Arm::SurgeryAlone);
    let chemo = cohort.filter_arm(Arm::SurgeryChemo);
    if alone.is_empty() {
        return Err(Error::EmptyArm(Arm::SurgeryAlone));
    }
    if chemo.is_empty() {
        return Err(Error::EmptyArm(Arm::SurgeryChemo));
    }
    Ok((alone, chemo))
}
