//! SMOTE oversampling of the minority event-status class within one arm.
//!
//! Survival time is interpolated with the same `u` as the covariates.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{write_cohort, Arm, Cohort, ExtraColumn, PatientRecord};
use crate::error::{Error, Result};
use crate::matching::{euclidean, standardize, Standardization};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority:majority ratio after oversampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResampledCohort {
    pub cohort: Cohort,
    /// Parallel to `cohort.records()`.
    pub synthetic: Vec<bool>,
}

impl ResampledCohort {
    pub fn n_synthetic(&self) -> usize {
        self.synthetic.iter().filter(|s| **s).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_cohort(
            writer,
            &self.cohort,
            &[ExtraColumn {
                name: "synthetic",
                values: self.synthetic.iter().map(|s| u8::from(*s).to_string()).collect(),
            }],
        )
    }
}

/// Nearest observed level; an exact midpoint goes to the level closer to `first_parent`.
fn round_to_level(levels: &[f64], v: f64, first_parent: f64) -> f64 {
    let mut best = levels[0];
    let mut best_d = (v - best).abs();
    for &l in &levels[1..] {
        let d = (v - l).abs();
        if d < best_d || (d == best_d && (l - first_parent).abs() < (best - first_parent).abs()) {
            best = l;
            best_d = d;
        }
    }
    best
}

pub fn smote_balance(arm_cohort: &Cohort, config: &SmoteConfig, std: &Standardization) -> Result<ResampledCohort> {
    if config.k_neighbors == 0 {
        return Err(Error::Precondition("k_neighbors must be at least 1".into()));
    }
    if !(config.target_ratio > 0.0 && config.target_ratio <= 1.0) {
        return Err(Error::Precondition(format!("target_ratio {} outside (0, 1]", config.target_ratio)));
    }
    if arm_cohort.has_missing() {
        return Err(Error::Precondition("SMOTE needs an imputed cohort".into()));
    }
    let records = arm_cohort.records();
    let n_events = arm_cohort.n_events();
    let n_censored = records.len() - n_events;
    let minority_flag = n_events < n_censored;
    let minority: Vec<usize> = (0..records.len()).filter(|&i| records[i].event == minority_flag).collect();
    let majority = records.len() - minority.len();
    let wanted = (config.target_ratio * majority as f64).ceil() as usize;
    let n_synth = wanted.saturating_sub(minority.len());
    let mut synthetic = vec![false; records.len()];
    if n_synth == 0 {
        return Ok(ResampledCohort {
            cohort: arm_cohort.clone(),
            synthetic,
        });
    }
    let class = if minority_flag { "event" } else { "censored" };
    if minority.len() < config.k_neighbors + 1 {
        return Err(Error::Precondition(format!(
            "minority class ({class}) has {} records; SMOTE with k = {} needs at least {}",
            minority.len(),
            config.k_neighbors,
            config.k_neighbors + 1
        )));
    }

    let schema = arm_cohort.schema();
    let levels: Vec<Option<Vec<f64>>> = (0..schema.len())
        .map(|k| {
            schema.kind(k).is_discrete().then(|| {
                let mut v: Vec<f64> = records.iter().map(|r| r.value(k)).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
        })
        .collect();
    let z: Vec<Vec<f64>> = minority.iter().map(|&i| std.apply(&records[i].values())).collect();
    let neighbors: Vec<Vec<usize>> = (0..minority.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..minority.len())
                .filter(|&j| j != i)
                .map(|j| (euclidean(&z[i], &z[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(config.k_neighbors);
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out: Vec<PatientRecord> = records.to_vec();
    for s in 0..n_synth {
        let bi = s % minority.len();
        let nn = neighbors[bi][rng.random_range(0..neighbors[bi].len())];
        let u: f64 = rng.random();
        let base = &records[minority[bi]];
        let other = &records[minority[nn]];
        let x: Vec<f64> = (0..schema.len())
            .map(|k| {
                let (a, b) = (base.value(k), other.value(k));
                let v = a + u * (b - a);
                match &levels[k] {
                    Some(lv) => round_to_level(lv, v, a),
                    None => v,
                }
            })
            .collect();
        let time = base.time_months + u * (other.time_months - base.time_months);
        out.push(PatientRecord::new(
            format!("{}~smote{:05}", base.id, s),
            x,
            time,
            minority_flag,
            base.arm,
        ));
        synthetic.push(true);
    }
    let cohort = Cohort::new(
        schema.clone(),
        out,
        format!("smote|k={}|ratio={}|seed={}", config.k_neighbors, config.target_ratio, config.seed),
    )?;
    Ok(ResampledCohort { cohort, synthetic })
}

/// Oversamples each arm separately, standardizing on the whole cohort. Arm
/// `a` uses seed stream `config.seed + index of a`.
pub fn smote_by_arm(cohort: &Cohort, config: &SmoteConfig) -> Result<Vec<(Arm, ResampledCohort)>> {
    let std = standardize(cohort)?;
    Arm::BOTH
        .par_iter()
        .enumerate()
        .map(|(i, &arm)| {
            let part = cohort.filter_arm(arm);
            if part.is_empty() {
                return Err(Error::EmptyArm(arm));
            }
            let cfg = SmoteConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..*config
            };
            Ok((arm, smote_balance(&part, &cfg, &std)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Covariate, CovariateKind, CovariateSchema};

    fn arm_cohort(n: usize, events: usize) -> Cohort {
        let schema = CovariateSchema::new(vec![
            Covariate::new("x", CovariateKind::Numeric),
            Covariate::new("b", CovariateKind::Binary),
        ])
        .unwrap();
        let records = (0..n)
            .map(|i| {
                PatientRecord::new(
                    format!("p{i:03}"),
                    vec![(i as f64 * 0.37).sin(), (i % 2) as f64],
                    5.0 + i as f64,
                    i < events,
                    Arm::SurgeryAlone,
                )
            })
            .collect();
        Cohort::new(schema, records, "t").unwrap()
    }

    #[test]
    fn balanced_input_is_untouched() {
        let c = arm_cohort(20, 10);
        let std = standardize(&c).unwrap();
        let r = smote_balance(&c, &SmoteConfig::default(), &std).unwrap();
        assert_eq!(r.cohort, c);
        assert_eq!(r.n_synthetic(), 0);
    }

    #[test]
    fn counts_and_time_ranges() {
        let c = arm_cohort(100, 20);
        let std = standardize(&c).unwrap();
        let r = smote_balance(&c, &SmoteConfig::default(), &std).unwrap();
        assert_eq!(r.n_synthetic(), 60);
        assert_eq!(&r.cohort.records()[..100], c.records());
        let (lo, hi) = (5.0, 24.0);
        for rec in &r.cohort.records()[100..] {
            assert!(rec.event);
            assert!(rec.time_months >= lo && rec.time_months <= hi);
            assert!(rec.covariates[1] == Some(0.0) || rec.covariates[1] == Some(1.0));
        }
    }

    #[test]
    fn too_small_minority() {
        let c = arm_cohort(30, 3);
        let std = standardize(&c).unwrap();
        let e = smote_balance(&c, &SmoteConfig::default(), &std).unwrap_err();
        assert!(e.to_string().contains("has 3 records"));
    }

    #[test]
    fn rounding_tie_goes_to_first_parent() {
        assert_eq!(round_to_level(&[0.0, 1.0], 0.5, 1.0), 1.0);
        assert_eq!(round_to_level(&[0.0, 1.0], 0.5, 0.0), 0.0);
        assert_eq!(round_to_level(&[0.0, 1.0, 2.0], 1.4, 0.0), 1.0);
    }
}
