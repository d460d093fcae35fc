//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma separated; `feature_subsets` separates subsets with `;`. Values given
//! on the command line replace file values key by key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cohort::Arm;
use crate::error::{Error, Result};
use crate::matching::MatchingMode;
use crate::stratify::{SchemePolicy, DEFAULT_HORIZON};
use crate::synth::RiskShape;

/// Alpha values searched when `alpha = grid`.
pub const DEFAULT_ALPHA_GRID: [usize; 7] = [10, 15, 20, 25, 30, 40, 50];

/// Every key `from_pairs` accepts.
pub const KEYS: &[&str] = &[
    "dev_cohort",
    "schema",
    "external",
    "models",
    "out",
    "seed",
    "horizon",
    "policy",
    "strata",
    "strata_set",
    "alpha",
    "modes",
    "replicates",
    "tuning_replicates",
    "features",
    "feature_subsets",
    "fit_arm",
    "smote_k",
    "smote_ratio",
    "synth_world",
    "synth_n_alone",
    "synth_n_chemo",
    "synth_shape",
    "synth_external_n",
    "synth_external_shape",
    "record_timings",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSetting {
    Fixed(usize),
    Grid(Vec<usize>),
}

impl AlphaSetting {
    pub fn parse(s: &str) -> Result<AlphaSetting> {
        if s == "grid" {
            return Ok(AlphaSetting::Grid(DEFAULT_ALPHA_GRID.to_vec()));
        }
        let values: Vec<usize> = parse_list(s, "alpha")?;
        match values.as_slice() {
            [] => Err(Error::Config("alpha is empty".into())),
            [v] => Ok(AlphaSetting::Fixed(*v)),
            _ => Ok(AlphaSetting::Grid(values)),
        }
    }

    pub fn values(&self) -> Vec<usize> {
        match self {
            AlphaSetting::Fixed(a) => vec![*a],
            AlphaSetting::Grid(g) => g.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthWorld {
    PaperLike,
    EffectModified,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// `None` runs on a generated synthetic world.
    pub dev_cohort: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub external: Vec<PathBuf>,
    pub models: Vec<PathBuf>,
    /// Left out of the manifest echo so reruns into different directories compare equal.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub horizon: f64,
    pub policy: SchemePolicy,
    pub strata: usize,
    pub strata_set: Vec<usize>,
    pub alpha: AlphaSetting,
    pub modes: Vec<MatchingMode>,
    pub replicates: usize,
    pub tuning_replicates: usize,
    /// Covariate subset; empty keeps every schema covariate.
    pub features: Vec<String>,
    pub feature_subsets: Vec<Vec<String>>,
    pub fit_arm: Option<Arm>,
    pub smote_k: usize,
    pub smote_ratio: f64,
    pub synth_world: SynthWorld,
    pub synth_n_alone: usize,
    pub synth_n_chemo: usize,
    pub synth_shape: RiskShape,
    pub synth_external_n: usize,
    pub synth_external_shape: RiskShape,
    /// Write wall-clock timings into the manifest, which breaks byte-identical reruns.
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dev_cohort: None,
            schema: None,
            external: Vec::new(),
            models: Vec::new(),
            out: PathBuf::from("out"),
            seed: 42,
            horizon: DEFAULT_HORIZON,
            policy: SchemePolicy::PaperDefault,
            strata: 8,
            strata_set: vec![7, 8, 9, 10],
            alpha: AlphaSetting::Grid(DEFAULT_ALPHA_GRID.to_vec()),
            modes: vec![MatchingMode::OneToOne, MatchingMode::Relaxed],
            replicates: 200,
            tuning_replicates: 50,
            features: Vec::new(),
            feature_subsets: Vec::new(),
            fit_arm: None,
            smote_k: 5,
            smote_ratio: 1.0,
            synth_world: SynthWorld::PaperLike,
            synth_n_alone: 602,
            synth_n_chemo: 1197,
            synth_shape: RiskShape::MidHeavy,
            synth_external_n: 1000,
            synth_external_shape: RiskShape::UniformTarget,
            record_timings: false,
        }
    }
}

fn parse_one<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_one(v, key))
        .collect()
}

fn strings(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("bad value `{v}` for `{key}`"))
}

/// Reads `key = value` pairs; later duplicates win.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Builds a config from an optional file plus overrides; relative paths in
    /// the file resolve against the file's directory.
    pub fn load(file: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let mut pairs = BTreeMap::new();
        let mut base = PathBuf::new();
        if let Some(f) = file {
            let text = std::fs::read_to_string(f)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", f.display())))?;
            pairs = parse_pairs(&text)?;
            base = f.parent().map(Path::to_path_buf).unwrap_or_default();
        }
        let from_file: Vec<String> = pairs.keys().cloned().collect();
        for (k, v) in overrides {
            pairs.insert(k.clone(), v.clone());
        }
        let mut cfg = ExperimentConfig::from_pairs(&pairs)?;
        let resolve = |p: &mut PathBuf, key: &str| {
            if p.is_relative() && from_file.iter().any(|k| k == key) && !overrides.contains_key(key) {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.dev_cohort.as_mut() {
            resolve(p, "dev_cohort");
        }
        if let Some(p) = cfg.schema.as_mut() {
            resolve(p, "schema");
        }
        cfg.external.iter_mut().for_each(|p| resolve(p, "external"));
        cfg.models.iter_mut().for_each(|p| resolve(p, "models"));
        resolve(&mut cfg.out, "out");
        Ok(cfg)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        for (k, v) in pairs {
            match k.as_str() {
                "dev_cohort" => c.dev_cohort = Some(PathBuf::from(v)),
                "schema" => c.schema = Some(PathBuf::from(v)),
                "external" => c.external = strings(v).into_iter().map(PathBuf::from).collect(),
                "models" => c.models = strings(v).into_iter().map(PathBuf::from).collect(),
                "out" => c.out = PathBuf::from(v),
                "seed" => c.seed = parse_one(v, k)?,
                "horizon" => c.horizon = parse_one(v, k)?,
                "policy" => c.policy = SchemePolicy::parse(v).ok_or_else(|| bad(k, v))?,
                "strata" => c.strata = parse_one(v, k)?,
                "strata_set" => c.strata_set = parse_list(v, k)?,
                "alpha" => c.alpha = AlphaSetting::parse(v)?,
                "modes" => {
                    c.modes = strings(v)
                        .iter()
                        .map(|m| MatchingMode::parse(m).ok_or_else(|| bad(k, m)))
                        .collect::<Result<_>>()?
                }
                "replicates" => c.replicates = parse_one(v, k)?,
                "tuning_replicates" => c.tuning_replicates = parse_one(v, k)?,
                "features" => c.features = strings(v),
                "feature_subsets" => c.feature_subsets = v.split(';').map(strings).filter(|s| !s.is_empty()).collect(),
                "fit_arm" => {
                    c.fit_arm = match v.as_str() {
                        "all" => None,
                        a => Some(Arm::parse(a).ok_or_else(|| bad(k, v))?),
                    }
                }
                "smote_k" => c.smote_k = parse_one(v, k)?,
                "smote_ratio" => c.smote_ratio = parse_one(v, k)?,
                "synth_world" => {
                    c.synth_world = match v.as_str() {
                        "paper-like" => SynthWorld::PaperLike,
                        "effect-modified" => SynthWorld::EffectModified,
                        _ => return Err(bad(k, v)),
                    }
                }
                "synth_n_alone" => c.synth_n_alone = parse_one(v, k)?,
                "synth_n_chemo" => c.synth_n_chemo = parse_one(v, k)?,
                "synth_shape" => c.synth_shape = RiskShape::parse(v).ok_or_else(|| bad(k, v))?,
                "synth_external_n" => c.synth_external_n = parse_one(v, k)?,
                "synth_external_shape" => c.synth_external_shape = RiskShape::parse(v).ok_or_else(|| bad(k, v))?,
                "record_timings" => c.record_timings = parse_one(v, k)?,
                _ => return Err(Error::Config(format!("unknown key `{k}`; known keys: {}", KEYS.join(", ")))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.dev_cohort.is_some() && self.schema.is_none() {
            return fail("`dev_cohort` needs a `schema`");
        }
        if !self.external.is_empty() && self.schema.is_none() {
            return fail("`external` cohorts need a `schema`");
        }
        if !(self.horizon > 0.0) {
            return fail("horizon must be positive");
        }
        if self.alpha.values().contains(&0) {
            return fail("alpha values must be at least 1");
        }
        if self.modes.is_empty() {
            return fail("at least one matching mode is required");
        }
        if self.strata_set.is_empty() {
            return fail("strata_set is empty");
        }
        if !(self.smote_ratio > 0.0 && self.smote_ratio <= 1.0) {
            return fail("smote_ratio must lie in (0, 1]");
        }
        Ok(())
    }

    /// Sensitivity runs are restricted to the decile-merging family around eight strata.
    pub fn validate_sensitivity(&self) -> Result<()> {
        if self.strata_set.iter().any(|s| !(7..=10).contains(s)) {
            return Err(Error::Config("sensitivity strata must lie in 7..=10".into()));
        }
        Ok(())
    }

    /// Feature subsets for the sensitivity grid; defaults to `features` alone.
    pub fn subsets(&self) -> Vec<Vec<String>> {
        if self.feature_subsets.is_empty() {
            vec![self.features.clone()]
        } else {
            self.feature_subsets.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let mut pairs = parse_pairs("# c\nseed = 3\nalpha = grid\nmodes = relaxed\n").unwrap();
        pairs.insert("seed".into(), "9".into());
        let c = ExperimentConfig::from_pairs(&pairs).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.alpha.values(), DEFAULT_ALPHA_GRID.to_vec());
        assert_eq!(c.modes, vec![MatchingMode::Relaxed]);
        pairs.insert("colour".into(), "red".into());
        assert!(matches!(ExperimentConfig::from_pairs(&pairs), Err(Error::Config(_))));
    }

    #[test]
    fn alpha_forms() {
        assert_eq!(AlphaSetting::parse("20").unwrap(), AlphaSetting::Fixed(20));
        assert_eq!(AlphaSetting::parse("10, 30").unwrap(), AlphaSetting::Grid(vec![10, 30]));
        assert!(AlphaSetting::parse("x").is_err());
    }

    #[test]
    fn feature_subsets_split_on_semicolons() {
        let pairs = parse_pairs("feature_subsets = a, b; c\n").unwrap();
        let c = ExperimentConfig::from_pairs(&pairs).unwrap();
        assert_eq!(c.subsets(), vec![vec!["a".to_string(), "b".into()], vec!["c".into()]]);
    }
}
