use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::stratify::{quantile_sorted, DEFAULT_HORIZON};

use super::procedures::{BalancedCoxProcedure, TrainProcedure};
use super::{metric_values, Interval, MetricReport, MetricValues};

pub const MIN_REPLICATES: usize = 50;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Two-sided percentile interval level.
    pub level: f64,
    /// ICI needs a spline Cox fit per evaluation; skip it when only ranking matters.
    pub with_ici: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 200,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            level: 0.95,
            with_ici: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimismReport {
    pub procedure: String,
    /// Apparent metrics; intervals are the boot-test percentiles.
    pub apparent: MetricReport,
    pub optimism: MetricValues,
    pub corrected: MetricValues,
    pub replicates: usize,
    pub failed_replicates: usize,
}

impl OptimismReport {
    /// Corrected values with the percentile intervals widened to contain them.
    pub fn corrected_report(&self) -> MetricReport {
        let a = &self.apparent;
        let c = &self.corrected;
        MetricReport {
            harrells_c: c.harrells_c,
            harrells_c_ci: a.harrells_c_ci.map(|i| i.covering(c.harrells_c)),
            auc_at_horizon: c.auc,
            auc_ci: a.auc_ci.map(|i| i.covering(c.auc)),
            ici: c.ici,
            ici_ci: match (a.ici_ci, c.ici) {
                (Some(i), Some(v)) => Some(i.covering(v)),
                _ => None,
            },
            ..a.clone()
        }
    }
}

struct Replicate {
    boot_apparent: MetricValues,
    boot_test: MetricValues,
}

fn percentile_interval(values: &mut [f64], level: f64, point: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: quantile_sorted(values, tail),
        hi: quantile_sorted(values, 1.0 - tail),
    }
    .covering(point)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Efron's optimism bootstrap. Every replicate reruns the whole procedure on a
/// resample of `cohort`; its model is scored on that resample (boot-apparent)
/// and on the original evaluation cohort (boot-test).
///
/// Replicate `b` draws from ChaCha stream `b` of `seed`, so results do not
/// depend on thread scheduling.
pub fn bootstrap_validate(
    procedure: &dyn TrainProcedure,
    cohort: &Cohort,
    config: &BootstrapConfig,
) -> Result<OptimismReport> {
    if config.replicates < MIN_REPLICATES {
        return Err(Error::Precondition(format!(
            "at least {MIN_REPLICATES} bootstrap replicates required, got {}",
            config.replicates
        )));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Precondition("interval level must lie in (0, 1)".into()));
    }
    let horizon = config.horizon;
    let original = procedure.train(cohort)?;
    let apparent = metric_values(&*original.predictor, &original.eval, horizon, config.with_ici)?;

    let n = cohort.len();
    let outcomes: Vec<Result<Replicate>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = cohort.resample(&idx, format!("bootstrap|replicate={b}"));
            let trained = procedure.train(&sample)?;
            Ok(Replicate {
                boot_apparent: metric_values(&*trained.predictor, &trained.eval, horizon, config.with_ici)?,
                boot_test: metric_values(&*trained.predictor, &original.eval, horizon, config.with_ici)?,
            })
        })
        .collect();

    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for (b, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => {
                debug!("replicate {b} failed: {e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * config.replicates as f64 {
        return Err(Error::Validation(format!(
            "{failed} of {} bootstrap replicates failed",
            config.replicates
        )));
    }
    if failed > 0 {
        warn!("{failed} of {} bootstrap replicates failed and were skipped", config.replicates);
    }

    let opt_c = mean(ok.iter().map(|r| r.boot_apparent.harrells_c - r.boot_test.harrells_c));
    let opt_auc = mean(ok.iter().map(|r| r.boot_apparent.auc - r.boot_test.auc));
    let ici_pairs: Vec<(f64, f64)> = ok
        .iter()
        .filter_map(|r| Some((r.boot_apparent.ici?, r.boot_test.ici?)))
        .collect();
    let opt_ici = match apparent.ici {
        Some(_) if !ici_pairs.is_empty() => Some(mean(ici_pairs.iter().map(|(a, t)| a - t))),
        _ => None,
    };

    let mut c_test: Vec<f64> = ok.iter().map(|r| r.boot_test.harrells_c).collect();
    let mut auc_test: Vec<f64> = ok.iter().map(|r| r.boot_test.auc).collect();
    let mut ici_test: Vec<f64> = ici_pairs.iter().map(|p| p.1).collect();

    let report = MetricReport {
        harrells_c: apparent.harrells_c,
        harrells_c_ci: Some(percentile_interval(&mut c_test, config.level, apparent.harrells_c)),
        auc_at_horizon: apparent.auc,
        auc_ci: Some(percentile_interval(&mut auc_test, config.level, apparent.auc)),
        ici: apparent.ici,
        ici_ci: match (apparent.ici, opt_ici) {
            (Some(v), Some(_)) => Some(percentile_interval(&mut ici_test, config.level, v)),
            _ => None,
        },
        n: original.eval.len(),
        n_events: original.eval.n_events(),
        horizon,
    };
    let optimism = MetricValues {
        harrells_c: opt_c,
        auc: opt_auc,
        ici: opt_ici,
    };
    let corrected = MetricValues {
        harrells_c: apparent.harrells_c - opt_c,
        auc: apparent.auc - opt_auc,
        ici: apparent.ici.zip(opt_ici).map(|(a, o)| a - o),
    };
    Ok(OptimismReport {
        procedure: procedure.name(),
        apparent: report,
        optimism,
        corrected,
        replicates: ok.len(),
        failed_replicates: failed,
    })
}

/// Optimism-corrected Harrell's C for each alpha in `grid`; returns the best
/// alpha (smallest on ties) and the full curve.
pub fn tune_alpha(
    base: &BalancedCoxProcedure,
    grid: &[usize],
    cohort: &Cohort,
    config: &BootstrapConfig,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if grid.is_empty() {
        return Err(Error::Precondition("alpha grid is empty".into()));
    }
    let cfg = BootstrapConfig {
        with_ici: false,
        ..*config
    };
    let mut curve = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let p = BalancedCoxProcedure {
            alpha,
            ..base.clone()
        };
        curve.push((alpha, bootstrap_validate(&p, cohort, &cfg)?.corrected.harrells_c));
    }
    let best = curve
        .iter()
        .fold(curve[0], |b, &c| if c.1 > b.1 { c } else { b })
        .0;
    Ok((best, curve))
}
