use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use strata_balance::cohort::Arm;
use strata_balance::matching::standardize;
use strata_balance::smote::{smote_balance, SmoteConfig};
use strata_balance::synth::{generate, RiskShape, SynthSpec, MID_HEAVY_TARGET};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smote_interpolates_inside_the_minority_class(seed in 0u64..1000, ratio in 0.3f64..=1.0, k in 1usize..8) {
        let mut spec = SynthSpec::paper_like(seed);
        spec.n_alone = 150;
        spec.n_chemo = 10;
        spec.risk_shape = RiskShape::Natural;
        let (cohort, _) = generate(&spec).unwrap();
        let arm = cohort.filter_arm(Arm::SurgeryAlone);
        let std = standardize(&cohort).unwrap();
        let cfg = SmoteConfig { k_neighbors: k, target_ratio: ratio, seed };
        let out = smote_balance(&arm, &cfg, &std).unwrap();

        let real = arm.records();
        let minority_flag = arm.n_events() < arm.len() - arm.n_events();
        let minority: Vec<_> = real.iter().filter(|r| r.event == minority_flag).collect();
        let majority = real.len() - minority.len();
        let wanted = ((ratio * majority as f64).ceil() as usize).saturating_sub(minority.len());
        prop_assert_eq!(out.n_synthetic(), wanted);
        prop_assert_eq!(&out.cohort.records()[..real.len()], real);

        for (j, _) in arm.schema().entries().iter().enumerate() {
            let lo = minority.iter().map(|r| r.value(j)).fold(f64::INFINITY, f64::min);
            let hi = minority.iter().map(|r| r.value(j)).fold(f64::NEG_INFINITY, f64::max);
            let levels: Vec<f64> = real.iter().map(|r| r.value(j)).collect();
            for s in &out.cohort.records()[real.len()..] {
                prop_assert!(s.value(j) >= lo && s.value(j) <= hi);
                if arm.schema().kind(j).is_discrete() {
                    prop_assert!(levels.contains(&s.value(j)));
                }
            }
        }
        let tlo = minority.iter().map(|r| r.time_months).fold(f64::INFINITY, f64::min);
        let thi = minority.iter().map(|r| r.time_months).fold(f64::NEG_INFINITY, f64::max);
        for s in &out.cohort.records()[real.len()..] {
            prop_assert_eq!(s.event, minority_flag);
            prop_assert!(s.time_months >= tlo && s.time_months <= thi);
        }
    }
}

#[test]
fn smote_names_the_class_when_too_small() {
    let mut spec = SynthSpec::paper_like(1);
    spec.n_alone = 6;
    spec.n_chemo = 1;
    let (cohort, _) = generate(&spec).unwrap();
    let arm = cohort.filter_arm(Arm::SurgeryAlone);
    let cfg = SmoteConfig { k_neighbors: 5, ..SmoteConfig::default() };
    match smote_balance(&arm, &cfg, &standardize(&cohort).unwrap()) {
        Ok(r) => assert_eq!(r.n_synthetic(), 0),
        Err(e) => assert!(e.to_string().contains("minority class"), "{e}"),
    }
}

#[test]
fn mid_heavy_shape_matches_its_target() {
    let mut spec = SynthSpec::paper_like(9);
    spec.n_alone = 4000;
    spec.n_chemo = 4000;
    let (_, truth) = generate(&spec).unwrap();
    let n = truth.true_risk_60.len() as f64;
    let mut counts = [0f64; 10];
    for r in &truth.true_risk_60 {
        counts[((r * 10.0) as usize).min(9)] += 1.0;
    }
    let total: f64 = MID_HEAVY_TARGET.iter().sum();
    for (c, p) in counts.iter().zip(MID_HEAVY_TARGET) {
        let p = p / total;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((c - n * p).abs() < 4.0 * sd + 1.0, "{c} vs {}", n * p);
    }
}

#[test]
fn uniform_target_fills_every_decile() {
    let spec = SynthSpec::paper_like(3).external(Arm::SurgeryChemo, 2000, RiskShape::UniformTarget, 5);
    let (_, truth) = generate(&spec).unwrap();
    let mut counts = [0usize; 10];
    for r in &truth.true_risk_60 {
        counts[((r * 10.0) as usize).min(9)] += 1;
    }
    assert!(counts.iter().all(|&c| (140..=260).contains(&c)), "{counts:?}");
}

/// Two-sample log-rank chi-square statistic.
fn log_rank(times: &[f64], events: &[bool], group: &[bool]) -> f64 {
    let mut ts: Vec<f64> = (0..times.len()).filter(|&i| events[i]).map(|i| times[i]).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    for t in ts {
        let at = |g: bool| (0..times.len()).filter(|&i| times[i] >= t && group[i] == g).count() as f64;
        let dead = |g: bool| (0..times.len()).filter(|&i| times[i] == t && events[i] && group[i] == g).count() as f64;
        let (n1, n) = (at(true), at(true) + at(false));
        let (d1, d) = (dead(true), dead(true) + dead(false));
        o_minus_e += d1 - d * n1 / n;
        if n > 1.0 {
            var += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
        }
    }
    o_minus_e * o_minus_e / var
}

fn arms_log_rank_p(seed: u64, log_hr: f64) -> f64 {
    let mut spec = SynthSpec::paper_like(seed);
    spec.n_alone = 300;
    spec.n_chemo = 300;
    spec.risk_shape = RiskShape::Natural;
    spec.treatment_log_hr = log_hr;
    let (c, _) = generate(&spec).unwrap();
    let group: Vec<bool> = c.records().iter().map(|r| r.arm == Arm::SurgeryChemo).collect();
    let stat = log_rank(&c.times(), &c.events(), &group);
    1.0 - ChiSquared::new(1.0).unwrap().cdf(stat)
}

#[test]
fn no_treatment_effect_means_no_survival_difference() {
    let rejections = (0..60).filter(|&s| arms_log_rank_p(200 + s, 0.0) < 0.05).count();
    assert!(rejections <= 9, "{rejections}/60 rejections at the 5% level");
}

#[test]
fn protective_treatment_is_detected() {
    let rejections = (0..20).filter(|&s| arms_log_rank_p(400 + s, -0.5) < 0.05).count();
    assert!(rejections >= 17, "{rejections}/20");
}

#[test]
fn generation_is_reproducible_and_seed_sensitive() {
    let spec = SynthSpec::paper_like(77);
    assert_eq!(generate(&spec).unwrap().0, generate(&spec).unwrap().0);
    let other = SynthSpec::paper_like(78);
    assert_ne!(generate(&spec).unwrap().0.records(), generate(&other).unwrap().0.records());
}
