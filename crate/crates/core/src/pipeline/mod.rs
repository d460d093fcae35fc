//! Command orchestration: each command reads a config, writes CSV/JSON
//! artifacts under `out`, and leaves a `FAILED` marker when a stage errors.

mod config;
mod tables;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

pub use config::{parse_pairs, AlphaSetting, ExperimentConfig, SynthWorld, DEFAULT_ALPHA_GRID, KEYS};
pub use tables::{comparison_rows, recount_balanced_csv, tail_strata, ComparisonRow, TAIL_MIN_EVENTS};

use crate::cohort::{impute, load_cohort, save_cohort, Arm, Cohort, CovariateSchema, ImputationReport};
use crate::cox::{self, CoxModel, FitConfig, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::matching::{balance_cohort, BalancedCohort, MatchingMode};
use crate::smote::SmoteConfig;
use crate::stratify::write_histogram;
use crate::synth::{generate, generate_arm, SynthSpec};
use crate::validation::{
    bootstrap_validate, evaluate, stratified_external_eval, tune_alpha, BalancedCoxProcedure, BootstrapConfig,
    CoxProcedure, ExternalConfig, OptimismReport, SmoteCoxProcedure, StratifiedReport, TrainProcedure,
};

pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Fit,
    Balance,
    Synth,
    Experiment,
    ValidateExternal,
    Sensitivity,
    SmoteCompare,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Balance => "balance",
            Command::Synth => "synth",
            Command::Experiment => "experiment",
            Command::ValidateExternal => "validate-external",
            Command::Sensitivity => "sensitivity",
            Command::SmoteCompare => "smote-compare",
        }
    }
}

/// Runs `command`; on failure writes `out/FAILED` with the error and keeps partial artifacts.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let marker = cfg.out.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let start = Instant::now();
    let result = match command {
        Command::Fit => cmd_fit(cfg),
        Command::Balance => cmd_balance(cfg),
        Command::Synth => cmd_synth(cfg),
        Command::Experiment => cmd_experiment(cfg),
        Command::ValidateExternal => cmd_validate_external(cfg),
        Command::Sensitivity => cmd_sensitivity(cfg),
        Command::SmoteCompare => cmd_smote_compare(cfg),
    };
    info!("{} finished in {:.2?}", command.label(), start.elapsed());
    if let Err(e) = &result {
        fs::write(&marker, format!("{}: {e}\n", command.label()))?;
    }
    result
}

// ---------------------------------------------------------------- data

/// Development and external cohorts after loading, imputation and feature selection.
pub struct Data {
    pub dev: Cohort,
    pub externals: Vec<(String, Cohort)>,
    pub imputation: Option<ImputationReport>,
    pub synth: Option<SynthSpec>,
}

fn world_spec(cfg: &ExperimentConfig) -> SynthSpec {
    let base = match cfg.synth_world {
        SynthWorld::PaperLike => SynthSpec::paper_like(cfg.seed),
        SynthWorld::EffectModified => SynthSpec::effect_modified(cfg.seed),
    };
    SynthSpec {
        n_alone: cfg.synth_n_alone,
        n_chemo: cfg.synth_n_chemo,
        risk_shape: cfg.synth_shape,
        ..base
    }
}

/// Seed of the synthetic external cohort for `arm`, kept apart from the development seed.
fn external_seed(seed: u64, arm: Arm) -> u64 {
    let k = match arm {
        Arm::SurgeryAlone => 1,
        Arm::SurgeryChemo => 2,
    };
    seed.wrapping_add(k * 1_000_003)
}

fn synthetic_externals(spec: &SynthSpec, cfg: &ExperimentConfig) -> Result<Vec<(String, Cohort)>> {
    Arm::BOTH
        .into_iter()
        .map(|arm| {
            let es = spec.external(arm, cfg.synth_external_n, cfg.synth_external_shape, external_seed(cfg.seed, arm));
            Ok((format!("synthetic-{}", arm.label()), generate_arm(&es, arm)?.0))
        })
        .collect()
}

fn select(cohort: Cohort, features: &[String]) -> Result<Cohort> {
    if features.is_empty() {
        return Ok(cohort);
    }
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    cohort.select_covariates(&names)
}

fn load_imputed(path: &Path, schema: &CovariateSchema) -> Result<(Cohort, ImputationReport)> {
    let outcome = load_cohort(path, schema)?;
    if outcome.excluded_rows > 0 {
        warn!("{}: {} rows without outcome or arm were excluded", path.display(), outcome.excluded_rows);
    }
    impute(&outcome.cohort)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "external".into())
}

pub fn load_data(cfg: &ExperimentConfig, features: &[String]) -> Result<Data> {
    let schema = cfg.schema.as_deref().map(CovariateSchema::load).transpose()?;
    let (dev, imputation, synth) = match &cfg.dev_cohort {
        Some(path) => {
            let (c, r) = load_imputed(path, schema.as_ref().expect("validated"))?;
            (c, Some(r), None)
        }
        None => {
            let spec = world_spec(cfg);
            (generate(&spec)?.0, None, Some(spec))
        }
    };
    let externals = if !cfg.external.is_empty() {
        let schema = schema.as_ref().expect("validated");
        cfg.external
            .iter()
            .map(|p| Ok((stem(p), load_imputed(p, schema)?.0)))
            .collect::<Result<Vec<_>>>()?
    } else if let Some(spec) = &synth {
        synthetic_externals(spec, cfg)?
    } else {
        Vec::new()
    };
    let dev = select(dev, features)?;
    let externals = externals
        .into_iter()
        .map(|(n, c)| Ok((n, select(c, features)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Data {
        dev,
        externals,
        imputation,
        synth,
    })
}

fn single_arm(c: &Cohort) -> Option<Arm> {
    let arms: Vec<Arm> = Arm::BOTH.into_iter().filter(|&a| c.count_arm(a) > 0).collect();
    (arms.len() == 1).then(|| arms[0])
}

// ---------------------------------------------------------------- output helpers

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct AlphaChoice {
    model: String,
    chosen: usize,
    curve: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    model_format_version: u32,
    command: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    synthetic_world: Option<&'a SynthSpec>,
    imputation: Option<&'a ImputationReport>,
    alpha_tuning: Vec<AlphaChoice>,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings_seconds: Option<Vec<(String, f64)>>,
}

fn list_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(rel) = p.strip_prefix(root) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != "manifest.json" && rel != FAILURE_MARKER {
                    out.push(rel);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    command: Command,
    alpha_tuning: Vec<AlphaChoice>,
    timings: Vec<(String, f64)>,
    clock: Instant,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig, command: Command) -> Self {
        Run {
            cfg,
            command,
            alpha_tuning: Vec::new(),
            timings: Vec::new(),
            clock: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let s = self.clock.elapsed().as_secs_f64();
        info!("{stage}: {s:.2}s");
        self.timings.push((stage.to_string(), s));
        self.clock = Instant::now();
    }

    fn finish(self, data: Option<&Data>) -> Result<()> {
        let manifest = Manifest {
            tool: "strata-balance",
            version: env!("CARGO_PKG_VERSION"),
            model_format_version: MODEL_FORMAT_VERSION,
            command: self.command.label(),
            seed: self.cfg.seed,
            config: self.cfg,
            synthetic_world: data.and_then(|d| d.synth.as_ref()),
            imputation: data.and_then(|d| d.imputation.as_ref()),
            alpha_tuning: self.alpha_tuning,
            files: list_files(&self.cfg.out)?,
            timings_seconds: self.cfg.record_timings.then_some(self.timings),
        };
        write_json(&self.cfg.out.join("manifest.json"), &manifest)
    }

    /// Fixed alpha, or the grid value with the best optimism-corrected C.
    fn alpha_for(&mut self, base: &BalancedCoxProcedure, dev: &Cohort, label: &str) -> Result<usize> {
        match &self.cfg.alpha {
            AlphaSetting::Fixed(a) => Ok(*a),
            AlphaSetting::Grid(grid) => {
                let bcfg = BootstrapConfig {
                    replicates: self.cfg.tuning_replicates,
                    horizon: self.cfg.horizon,
                    seed: self.cfg.seed,
                    ..BootstrapConfig::default()
                };
                let (chosen, curve) = tune_alpha(base, grid, dev, &bcfg)?;
                info!("{label}: alpha {chosen} chosen from {grid:?}");
                self.alpha_tuning.push(AlphaChoice {
                    model: label.to_string(),
                    chosen,
                    curve,
                });
                Ok(chosen)
            }
        }
    }
}

fn fit_config() -> FitConfig {
    FitConfig::default()
}

fn balanced_procedure(cfg: &ExperimentConfig, arm: Arm, mode: MatchingMode, strata: usize) -> BalancedCoxProcedure {
    BalancedCoxProcedure {
        arm,
        strata,
        policy: cfg.policy,
        alpha: cfg.alpha.values()[0],
        mode,
        horizon: cfg.horizon,
        config: fit_config(),
    }
}

/// Model label in the style of the experimental grid: 1, 2A, 2B, 3A/3B with mode.
pub fn model_label(arm: Option<Arm>, balanced: Option<MatchingMode>) -> String {
    let letter = |a: Arm| match a {
        Arm::SurgeryAlone => "a",
        Arm::SurgeryChemo => "b",
    };
    match (arm, balanced) {
        (None, _) => "model_1".into(),
        (Some(a), None) => format!("model_2{}", letter(a)),
        (Some(a), Some(m)) => format!("model_3{}_{}", letter(a), m.label()),
    }
}

fn write_balanced(dir: &Path, label: &str, balanced: &BalancedCohort) -> Result<()> {
    for arm in Arm::BOTH {
        balanced.write_arm_csv(create(&dir.join(format!("{label}_{}.csv", arm.label())))?, arm)?;
    }
    balanced.write_matches(create(&dir.join(format!("{label}_matches.csv")))?)?;
    write_histogram(create(&dir.join(format!("{label}_histogram.csv")))?, &balanced.histogram())
}

/// Reads the emitted one-to-one CSVs back and insists on equal arm counts per stratum.
fn check_equal_counts(dir: &Path, label: &str) -> Result<()> {
    let [alone, chemo] = Arm::BOTH.map(|a| recount_balanced_csv(&dir.join(format!("{label}_{}.csv", a.label()))));
    let (alone, chemo) = (alone?, chemo?);
    if alone != chemo {
        return Err(Error::Validation(format!(
            "{label}: one-to-one arm counts differ by stratum: {alone:?} vs {chemo:?}"
        )));
    }
    Ok(())
}

fn log_fit_warnings(model: &CoxModel) {
    for w in &model.fit_info.warnings {
        warn!("{}: {w}", model.name);
    }
}

fn save_model(dir: &Path, model: &CoxModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    model.save(dir.join(format!("{}.json", model.name)))
}

// ---------------------------------------------------------------- commands

fn cmd_synth(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::new(cfg, Command::Synth);
    let spec = world_spec(cfg);
    let (cohort, truth) = generate(&spec)?;
    save_cohort(cfg.out.join("cohort.csv"), &cohort, &[])?;
    cohort.schema().write(create(&cfg.out.join("schema.csv"))?)?;
    truth.write(create(&cfg.out.join("truth.csv"))?)?;
    write_json(&cfg.out.join("spec.json"), &spec)?;
    for arm in Arm::BOTH {
        let es = spec.external(arm, cfg.synth_external_n, cfg.synth_external_shape, external_seed(cfg.seed, arm));
        let (ext, t) = generate_arm(&es, arm)?;
        save_cohort(cfg.out.join(format!("external_{}.csv", arm.label())), &ext, &[])?;
        t.write(create(&cfg.out.join(format!("external_{}_truth.csv", arm.label())))?)?;
    }
    run.lap("generate");
    run.finish(None)
}

fn cmd_fit(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::new(cfg, Command::Fit);
    let data = load_data(cfg, &cfg.features)?;
    let train = match cfg.fit_arm {
        None => data.dev.clone(),
        Some(a) => data.dev.filter_arm(a),
    };
    if train.is_empty() {
        return Err(Error::EmptyArm(cfg.fit_arm.unwrap_or(Arm::SurgeryAlone)));
    }
    let model = cox::fit(&train, &fit_config())?
        .with_name(model_label(cfg.fit_arm, None))
        .with_arm(cfg.fit_arm);
    log_fit_warnings(&model);
    model.save(cfg.out.join("model.json"))?;
    tables::write_coefficients(create(&cfg.out.join("coefficients.csv"))?, &model)?;
    let report = evaluate(&model, &train, cfg.horizon)?;
    write_json(&cfg.out.join("apparent.json"), &report)?;
    run.lap("fit");
    run.finish(Some(&data))
}

fn cmd_balance(cfg: &ExperimentConfig) -> Result<()> {
    let AlphaSetting::Fixed(alpha) = cfg.alpha else {
        return Err(Error::Config("`balance` needs a single alpha, e.g. --alpha 20".into()));
    };
    let mut run = Run::new(cfg, Command::Balance);
    let data = load_data(cfg, &cfg.features)?;
    let proc = balanced_procedure(cfg, Arm::SurgeryAlone, cfg.modes[0], cfg.strata);
    let stratified = proc.stratify(&data.dev)?;
    tables::write_risks(create(&cfg.out.join("baseline_risks.csv"))?, &stratified)?;
    write_histogram(create(&cfg.out.join("histogram_pre.csv"))?, &stratified.histogram())?;
    for &mode in &cfg.modes {
        let balanced = balance_cohort(&stratified, alpha, mode)?;
        info!("{} balancing solved in {:.3?}", mode.label(), balanced.solve_time);
        write_balanced(&cfg.out, &format!("balanced_{}", mode.label()), &balanced)?;
    }
    run.lap("balance");
    run.finish(Some(&data))
}

struct TrainedModel {
    label: String,
    arm: Option<Arm>,
    mode: Option<MatchingMode>,
    alpha: Option<usize>,
    model: CoxModel,
    report: Option<OptimismReport>,
}

/// Fits Model 1, 2A/2B and 3A/3B per mode; with `bootstrap` each also gets an optimism report.
fn train_roster(
    run: &mut Run<'_>,
    dev: &Cohort,
    strata: usize,
    modes: &[MatchingMode],
    with_arm_models: bool,
    bootstrap: bool,
    balanced_dir: Option<&Path>,
) -> Result<Vec<TrainedModel>> {
    let cfg = run.cfg;
    let bcfg = BootstrapConfig {
        replicates: cfg.replicates,
        horizon: cfg.horizon,
        seed: cfg.seed,
        ..BootstrapConfig::default()
    };
    let mut out = Vec::new();
    let mut push = |label: String,
                    arm: Option<Arm>,
                    mode: Option<MatchingMode>,
                    alpha: Option<usize>,
                    proc: &dyn TrainProcedure|
     -> Result<()> {
        let trained = proc.train(dev)?;
        let model = trained
            .model
            .expect("Cox procedures return a model")
            .with_name(label.clone())
            .with_arm(arm);
        log_fit_warnings(&model);
        let report = if bootstrap {
            Some(bootstrap_validate(proc, dev, &bcfg)?)
        } else {
            None
        };
        out.push(TrainedModel {
            label,
            arm,
            mode,
            alpha,
            model,
            report,
        });
        Ok(())
    };
    push(
        model_label(None, None),
        None,
        None,
        None,
        &CoxProcedure {
            arm: None,
            config: fit_config(),
        },
    )?;
    run.lap("model 1");
    if with_arm_models {
        for arm in Arm::BOTH {
            push(
                model_label(Some(arm), None),
                Some(arm),
                None,
                None,
                &CoxProcedure {
                    arm: Some(arm),
                    config: fit_config(),
                },
            )?;
        }
        run.lap("models 2");
    }
    for arm in Arm::BOTH {
        for &mode in modes {
            let label = model_label(Some(arm), Some(mode));
            let mut proc = balanced_procedure(cfg, arm, mode, strata);
            proc.alpha = run.alpha_for(&proc, dev, &label)?;
            if let Some(dir) = balanced_dir {
                write_balanced(dir, &label, &proc.balance(dev)?)?;
                if mode == MatchingMode::OneToOne {
                    check_equal_counts(dir, &label)?;
                }
            }
            push(label.clone(), Some(arm), Some(mode), Some(proc.alpha), &proc)?;
            run.lap(&label);
        }
    }
    Ok(out)
}

fn cmd_experiment(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::new(cfg, Command::Experiment);
    let data = load_data(cfg, &cfg.features)?;
    let pre = balanced_procedure(cfg, Arm::SurgeryAlone, cfg.modes[0], cfg.strata).stratify(&data.dev)?;
    write_histogram(create(&cfg.out.join("histogram_pre.csv"))?, &pre.histogram())?;
    let roster = train_roster(
        &mut run,
        &data.dev,
        cfg.strata,
        &cfg.modes,
        true,
        true,
        Some(&cfg.out.join("balanced")),
    )?;
    let models_dir = cfg.out.join("models");
    let mut rows = Vec::new();
    for m in &roster {
        save_model(&models_dir, &m.model)?;
        let report = m.report.as_ref().expect("bootstrapped");
        rows.push(tables::InternalRow {
            model: m.label.clone(),
            arm: m.arm,
            mode: m.mode,
            alpha: m.alpha,
            report: report.clone(),
        });
    }
    tables::write_internal(create(&cfg.out.join("internal_apparent.csv"))?, &rows, false)?;
    tables::write_internal(create(&cfg.out.join("internal_corrected.csv"))?, &rows, true)?;
    write_json(&cfg.out.join("internal_validation.json"), &rows)?;
    run.finish(Some(&data))
}

fn load_models(cfg: &ExperimentConfig) -> Result<Vec<CoxModel>> {
    let paths: Vec<PathBuf> = if cfg.models.is_empty() {
        let dir = cfg.out.join("models");
        let mut v: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::Config(format!("no `models` given and {} unreadable: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        cfg.models.clone()
    };
    if paths.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    paths.iter().map(CoxModel::load).collect()
}

/// Externals a model may be evaluated on: every single-arm cohort of its arm.
fn eligible<'d>(model: &CoxModel, externals: &'d [(String, Cohort)]) -> Result<Vec<&'d (String, Cohort)>> {
    let matches: Vec<&(String, Cohort)> = externals
        .iter()
        .filter(|(_, c)| match (model.arm, single_arm(c)) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(a), Some(b)) => a == b,
        })
        .collect();
    if matches.is_empty() {
        let arms: Vec<String> = externals
            .iter()
            .map(|(n, c)| format!("{n}={}", single_arm(c).map_or("mixed", Arm::label)))
            .collect();
        return Err(Error::Precondition(format!(
            "refusing to evaluate `{}` (arm {}): no external cohort of that arm among [{}]",
            model.name,
            model.arm.map_or("all", Arm::label),
            arms.join(", ")
        )));
    }
    Ok(matches)
}

fn external_config(cfg: &ExperimentConfig, strata: usize) -> ExternalConfig {
    ExternalConfig {
        strata,
        policy: cfg.policy,
        horizon: cfg.horizon,
        fit: fit_config(),
    }
}

fn write_report(dir: &Path, stem: &str, report: &StratifiedReport) -> Result<()> {
    report.write_csv(create(&dir.join(format!("{stem}.csv")))?)?;
    fs::write(dir.join(format!("{stem}.json")), report.to_json()? + "\n")?;
    Ok(())
}

fn cmd_validate_external(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::new(cfg, Command::ValidateExternal);
    let models = load_models(cfg)?;
    let data = load_data(cfg, &cfg.features)?;
    if data.externals.is_empty() {
        return Err(Error::Config("no external cohorts configured".into()));
    }
    let mut overall = Vec::new();
    for model in &models {
        for (name, ext) in eligible(model, &data.externals)? {
            let dir = cfg.out.join("external").join(name);
            for &s in &cfg.strata_set {
                let report = stratified_external_eval(model, ext, &external_config(cfg, s))?;
                write_report(&dir, &format!("{}_S{s}", model.name), &report)?;
            }
            overall.push((model.name.clone(), name.clone(), evaluate(model, ext, cfg.horizon)?));
        }
    }
    tables::write_overall(create(&cfg.out.join("external_overall.csv"))?, &overall)?;
    run.lap("validate-external");
    run.finish(Some(&data))
}

fn cmd_sensitivity(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate_sensitivity()?;
    let mut run = Run::new(cfg, Command::Sensitivity);
    let mut all_rows = Vec::new();
    let mut last = None;
    let mode = cfg.modes[0];
    for (j, subset) in cfg.subsets().iter().enumerate() {
        let data = load_data(cfg, subset)?;
        if data.externals.is_empty() {
            return Err(Error::Config("no external cohorts configured".into()));
        }
        for &s in &cfg.strata_set {
            let run_name = format!("S{s}_f{j}");
            let dir = cfg.out.join("runs").join(&run_name);
            let roster = train_roster(&mut run, &data.dev, s, &[mode], false, false, None)?;
            let model1 = &roster[0];
            for m in &roster {
                save_model(&dir.join("models"), &m.model)?;
            }
            for (name, ext) in &data.externals {
                let Some(arm) = single_arm(ext) else { continue };
                let ecfg = external_config(cfg, s);
                let base = stratified_external_eval(&model1.model, ext, &ecfg)?;
                write_report(&dir.join(name), &model1.label, &base)?;
                let balanced = roster
                    .iter()
                    .find(|m| m.arm == Some(arm))
                    .expect("a balanced model per arm");
                let rep = stratified_external_eval(&balanced.model, ext, &ecfg)?;
                write_report(&dir.join(name), &balanced.label, &rep)?;
                all_rows.extend(comparison_rows(&run_name, s, j, name, &balanced.label, &base, &rep));
            }
        }
        last = Some(data);
    }
    tables::write_comparison(create(&cfg.out.join("comparison.csv"))?, &all_rows)?;
    run.finish(last.as_ref())
}

fn cmd_smote_compare(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::new(cfg, Command::SmoteCompare);
    let data = load_data(cfg, &cfg.features)?;
    if data.externals.is_empty() {
        return Err(Error::Config("no external cohorts configured".into()));
    }
    let mode = cfg.modes[0];
    let roster = train_roster(&mut run, &data.dev, cfg.strata, &[mode], false, false, None)?;
    let models_dir = cfg.out.join("models");
    let mut entries: Vec<(&'static str, CoxModel)> = Vec::new();
    for m in &roster {
        let method = if m.arm.is_some() { "matching" } else { "none" };
        entries.push((method, m.model.clone()));
    }
    for arm in Arm::BOTH {
        let proc = SmoteCoxProcedure {
            arm,
            smote: SmoteConfig {
                k_neighbors: cfg.smote_k,
                target_ratio: cfg.smote_ratio,
                seed: cfg.seed,
            },
            config: fit_config(),
        };
        let model = proc.train(&data.dev)?.model.expect("Cox procedure");
        let label = format!("smote_{}", arm.label());
        entries.push(("smote", model.with_name(label).with_arm(Some(arm))));
    }
    run.lap("smote models");
    for (_, m) in &entries {
        save_model(&models_dir, m)?;
    }
    for (name, ext) in &data.externals {
        let Some(arm) = single_arm(ext) else { continue };
        for &s in &cfg.strata_set {
            let ecfg = external_config(cfg, s);
            let mut rows = Vec::new();
            for (method, m) in entries.iter().filter(|(_, m)| m.arm.is_none() || m.arm == Some(arm)) {
                rows.push((*method, stratified_external_eval(m, ext, &ecfg)?));
            }
            tables::write_method_table(create(&cfg.out.join("smote_compare").join(format!("{name}_S{s}.csv")))?, &rows)?;
        }
    }
    run.lap("smote-compare");
    run.finish(Some(&data))
}
