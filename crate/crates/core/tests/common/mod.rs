#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use strata_balance::cohort::{Arm, Cohort, Covariate, CovariateKind, CovariateSchema, PatientRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn continuous_schema(k: usize) -> CovariateSchema {
    CovariateSchema::new((0..k).map(|j| Covariate::new(format!("x{j}"), CovariateKind::Numeric)).collect())
        .unwrap()
}

/// Cohort from rows `(x, time, event)`; all records in the surgery-alone arm.
pub fn cohort_from(rows: &[(Vec<f64>, f64, bool)]) -> Cohort {
    let k = rows.first().map_or(0, |r| r.0.len());
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (x, t, e))| PatientRecord::new(format!("p{i:04}"), x.clone(), *t, *e, Arm::SurgeryAlone))
        .collect();
    Cohort::new(continuous_schema(k), records, "test").unwrap()
}

/// Exponential PH data with standard normal covariates and exponential censoring.
pub fn exponential_ph(seed: u64, n: usize, beta: &[f64], censor_rate: f64) -> Cohort {
    let mut r = rng(seed);
    let rows: Vec<(Vec<f64>, f64, bool)> = (0..n)
        .map(|_| {
            let x: Vec<f64> = beta.iter().map(|_| StandardNormal.sample(&mut r)).collect();
            let lp: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let t: f64 = Exp1.sample(&mut r);
            let t = t / (0.05 * lp.exp());
            let c: f64 = if censor_rate > 0.0 {
                Distribution::<f64>::sample(&Exp1, &mut r) / censor_rate
            } else {
                f64::INFINITY
            };
            (x, t.min(c), t <= c)
        })
        .collect();
    cohort_from(&rows)
}

/// Times rounded up to whole months so that ties are common.
pub fn with_integer_times(c: &Cohort) -> Cohort {
    let rows: Vec<_> = c
        .records()
        .iter()
        .map(|r| (r.values(), r.time_months.ceil().max(1.0), r.event))
        .collect();
    cohort_from(&rows)
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}
