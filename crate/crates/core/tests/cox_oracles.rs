mod common;

use approx::assert_relative_eq;
use common::{cohort_from, exponential_ph, rng, uniform, with_integer_times};
use proptest::prelude::*;
use rand::Rng;
use strata_balance::cox::{self, nlpl_and_gradient, FitConfig};
use strata_balance::km::KaplanMeier;

/// Efron negative log partial likelihood written directly from its definition.
fn efron_nlpl_naive(x: &[Vec<f64>], time: &[f64], event: &[bool], beta: &[f64]) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut times: Vec<f64> = (0..time.len()).filter(|&i| event[i]).map(|i| time[i]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut nlpl = 0.0;
    for t in times {
        let dead: Vec<usize> = (0..time.len()).filter(|&i| event[i] && time[i] == t).collect();
        let risk: f64 = (0..time.len()).filter(|&i| time[i] >= t).map(|i| eta[i].exp()).sum();
        let tied: f64 = dead.iter().map(|&i| eta[i].exp()).sum();
        let d = dead.len() as f64;
        for (l, &i) in dead.iter().enumerate() {
            nlpl -= eta[i];
            nlpl += (risk - l as f64 / d * tied).ln();
        }
    }
    nlpl
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-11 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (a + b) / 2.0
}

#[test]
fn gradient_matches_central_differences() {
    let cohort = with_integer_times(&exponential_ph(1, 150, &[0.5, -0.3, 0.2], 0.02));
    let mut r = rng(99);
    for _ in 0..10 {
        let beta: Vec<f64> = (0..3).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let (_, grad) = nlpl_and_gradient(&cohort, &beta).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (nlpl_and_gradient(&cohort, &up).unwrap().0 - nlpl_and_gradient(&cohort, &dn).unwrap().0) / (2.0 * h);
            assert!((grad[j] - fd).abs() / fd.abs().max(1e-3) < 1e-6, "{} vs {fd}", grad[j]);
        }
    }
}

#[test]
fn likelihood_matches_definition_with_ties() {
    let cohort = with_integer_times(&exponential_ph(2, 80, &[0.7, 0.1], 0.03));
    let x: Vec<Vec<f64>> = cohort.records().iter().map(|r| r.values()).collect();
    let (t, e) = (cohort.times(), cohort.events());
    let mut r = rng(5);
    for _ in 0..5 {
        let beta = [uniform(&mut r, -1.0, 1.0), uniform(&mut r, -1.0, 1.0)];
        let ours = nlpl_and_gradient(&cohort, &beta).unwrap().0;
        assert_relative_eq!(ours, efron_nlpl_naive(&x, &t, &e, &beta), max_relative = 1e-10);
    }
}

#[test]
fn one_covariate_fit_is_the_likelihood_minimum() {
    let cohort = with_integer_times(&exponential_ph(3, 200, &[0.8], 0.02));
    let x: Vec<Vec<f64>> = cohort.records().iter().map(|r| r.values()).collect();
    let (t, e) = (cohort.times(), cohort.events());
    let best = golden_section(|b| efron_nlpl_naive(&x, &t, &e, &[b]), -5.0, 5.0);
    let model = cox::fit(&cohort, &FitConfig::default()).unwrap();
    assert!((model.beta[0] - best).abs() < 1e-6, "{} vs {best}", model.beta[0]);
}

/// Two-group exponential data with true log hazard ratio ln 2.
fn two_group(seed: u64, n: usize) -> strata_balance::cohort::Cohort {
    let mut r = rng(seed);
    let rows: Vec<_> = (0..n)
        .map(|i| {
            let g = (i % 2) as f64;
            let t = -(1.0 - r.random::<f64>()).ln() / (0.1 * (g * 2f64.ln()).exp());
            let c = -(1.0 - r.random::<f64>()).ln() / 0.05;
            (vec![g], t.min(c), t <= c)
        })
        .collect();
    cohort_from(&rows)
}

#[test]
fn log_hazard_ratio_is_recovered_within_three_standard_errors() {
    let covered = (0..100)
        .filter(|&s| {
            let m = cox::fit(&two_group(1000 + s, 400), &FitConfig::default()).unwrap();
            (m.beta[0] - 2f64.ln()).abs() < 3.0 * m.std_errors[0]
        })
        .count();
    assert!(covered >= 95, "{covered}/100");
}

#[test]
fn breslow_increment_at_first_event() {
    let rows: Vec<_> = [(1.0, true), (2.0, false), (2.0, true), (3.0, true), (5.0, false), (6.0, true)]
        .iter()
        .enumerate()
        .map(|(i, &(t, e))| (vec![if i % 2 == 0 { 1.0 } else { -1.0 }], t, e))
        .collect();
    let cohort = cohort_from(&rows);
    let m = cox::fit(&cohort, &FitConfig::default()).unwrap();
    // With any fitted beta, H0 at the first event is 1 / sum of relative risks.
    let rr: f64 = cohort.records().iter().map(|r| m.linear_predictor(r).exp()).sum();
    let rec = &cohort.records()[0];
    let h1 = -m.survival_at(rec, 1.0).ln() / m.linear_predictor(rec).exp();
    assert_relative_eq!(h1, 1.0 / rr, max_relative = 1e-9);
    // And the KM of the same data is untouched by the model.
    let km = KaplanMeier::fit(&cohort.times(), &cohort.events());
    assert_relative_eq!(km.survival_at(1.0), 5.0 / 6.0, max_relative = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_invariant_under_monotone_time_transform(seed in 0u64..10_000, p in 0.5f64..3.0) {
        let c = exponential_ph(seed, 120, &[0.6, -0.4], 0.02);
        let rows: Vec<_> = c.records().iter().map(|r| (r.values(), r.time_months.powf(p) + 1.0, r.event)).collect();
        let a = cox::fit(&c, &FitConfig::default()).unwrap();
        let b = cox::fit(&cohort_from(&rows), &FitConfig::default()).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn risks_are_probabilities_and_monotone_in_horizon(seed in 0u64..10_000) {
        let c = exponential_ph(seed, 60, &[0.5], 0.02);
        let m = cox::fit(&c, &FitConfig::default()).unwrap();
        for r in c.records() {
            let (a, b) = (m.risk_at(r, 10.0), m.risk_at(r, 40.0));
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a <= b);
        }
    }

    #[test]
    fn model_json_round_trips(seed in 0u64..10_000) {
        let m = cox::fit(&exponential_ph(seed, 50, &[0.3, 0.2], 0.02), &FitConfig::default()).unwrap();
        let back = strata_balance::cox::CoxModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(m, back);
    }
}
