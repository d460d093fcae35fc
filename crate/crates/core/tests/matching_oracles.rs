mod common;

use std::collections::HashSet;

use common::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use strata_balance::cohort::Arm;
use strata_balance::cox::FitConfig;
use strata_balance::matching::{
    balance_cohort, brute_force_match, solve_one_to_one, solve_relaxed, MatchingMode, MatchingProblem,
};
use strata_balance::stratify::{build_scheme, fit_baseline_model, SchemePolicy, StratifiedCohort};
use strata_balance::synth::{generate, SynthSpec};

fn rows(r: &mut impl Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| r.random_range(-3.0..3.0)).collect()).collect()
}

/// Minimum cost of exactly `target` disjoint pairs by DP over (A prefix, used-B mask).
fn dp_optimum(p: &MatchingProblem, target: usize) -> f64 {
    let (na, nb) = (p.n_a(), p.n_b());
    let mut dp = vec![f64::INFINITY; 1 << nb];
    dp[0] = 0.0;
    for a in 0..na {
        let mut next = dp.clone();
        for mask in 0..(1usize << nb) {
            if dp[mask].is_finite() {
                for b in 0..nb {
                    if mask & (1 << b) == 0 {
                        let m = mask | (1 << b);
                        next[m] = next[m].min(dp[mask] + p.distance(a, b));
                    }
                }
            }
        }
        dp = next;
    }
    (0..(1usize << nb))
        .filter(|m| m.count_ones() as usize == target)
        .map(|m| dp[m])
        .fold(f64::INFINITY, f64::min)
}

fn check_valid(p: &MatchingProblem, pairs: &[(usize, usize)], target: usize) {
    assert_eq!(pairs.len(), target);
    let a: HashSet<_> = pairs.iter().map(|x| x.0).collect();
    let b: HashSet<_> = pairs.iter().map(|x| x.1).collect();
    assert_eq!(a.len(), target, "A reused");
    assert_eq!(b.len(), target, "B reused");
    assert!(pairs.iter().all(|&(i, j)| i < p.n_a() && j < p.n_b()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn flow_agrees_with_exhaustive_search(
        seed in any::<u64>(), na in 0usize..=7, nb in 0usize..=7, k in 1usize..=4, alpha in 1usize..=9,
    ) {
        let mut r = rng(seed);
        let p = MatchingProblem::from_rows(rows(&mut r, na, k), rows(&mut r, nb, k), alpha).unwrap();
        let flow = solve_one_to_one(&p);
        let brute = brute_force_match(&p).unwrap();
        let target = p.target_cardinality();
        let pairs: Vec<_> = flow.pairs.iter().map(|x| (x.a, x.b)).collect();
        check_valid(&p, &pairs, target);
        prop_assert_eq!(flow.objective, brute.objective);
        let dp = dp_optimum(&p, target);
        prop_assert!((flow.objective - dp).abs() <= 1e-9 * (1.0 + dp), "{} vs {}", flow.objective, dp);
    }

    #[test]
    fn no_random_feasible_matching_beats_the_flow(seed in any::<u64>(), na in 1usize..=30, nb in 1usize..=30, alpha in 1usize..=40) {
        let mut r = rng(seed);
        let p = MatchingProblem::from_rows(rows(&mut r, na, 3), rows(&mut r, nb, 3), alpha).unwrap();
        let flow = solve_one_to_one(&p);
        let target = p.target_cardinality();
        let pairs: Vec<_> = flow.pairs.iter().map(|x| (x.a, x.b)).collect();
        check_valid(&p, &pairs, target);
        for _ in 0..50 {
            let mut a: Vec<usize> = (0..na).collect();
            let mut b: Vec<usize> = (0..nb).collect();
            a.shuffle(&mut r);
            b.shuffle(&mut r);
            let cost: f64 = a.iter().zip(&b).take(target).map(|(&i, &j)| p.distance(i, j)).sum();
            prop_assert!(flow.objective <= cost + 1e-9);
        }
    }

    #[test]
    fn relaxed_takes_the_closest_nearest_neighbours(seed in any::<u64>(), na in 1usize..=20, nb in 1usize..=20, alpha in 1usize..=25) {
        let mut r = rng(seed);
        let p = MatchingProblem::from_rows(rows(&mut r, na, 2), rows(&mut r, nb, 2), alpha).unwrap();
        let mut nearest: Vec<f64> = (0..na)
            .map(|a| (0..nb).map(|b| p.distance(a, b)).fold(f64::INFINITY, f64::min))
            .collect();
        nearest.sort_by(f64::total_cmp);
        let expect: f64 = nearest.iter().take(alpha.min(na)).sum();
        let relaxed = solve_relaxed(&p);
        prop_assert_eq!(relaxed.cardinality, alpha.min(na));
        prop_assert!((relaxed.objective - expect).abs() < 1e-9);
        prop_assert!(relaxed.objective <= solve_one_to_one(&p).objective + 1e-9 || relaxed.cardinality > p.target_cardinality());
    }
}

#[test]
fn brute_force_refuses_large_groups() {
    let mut r = rng(1);
    let p = MatchingProblem::from_rows(rows(&mut r, 8, 2), rows(&mut r, 3, 2), 2).unwrap();
    assert!(brute_force_match(&p).is_err());
}

#[test]
fn one_to_one_balance_has_equal_arm_counts_in_every_stratum() {
    for seed in 0..3 {
        let (cohort, _) = generate(&SynthSpec::paper_like(seed)).unwrap();
        let base = fit_baseline_model(&cohort.filter_arm(Arm::SurgeryAlone), &FitConfig::default()).unwrap();
        let risks = base.risks_at(&cohort, 60.0);
        let scheme = build_scheme(8, SchemePolicy::PaperDefault, &risks).unwrap();
        let s = StratifiedCohort::new(cohort, risks, scheme).unwrap();
        for alpha in [5, 20, 60] {
            let b = balance_cohort(&s, alpha, MatchingMode::OneToOne).unwrap();
            let (ca, cc) = (b.counts(Arm::SurgeryAlone), b.counts(Arm::SurgeryChemo));
            assert_eq!(ca, cc);
            for (h, c) in s.histogram().iter().zip(&ca) {
                assert_eq!(*c, alpha.min(h.count_alone).min(h.count_chemo));
            }
        }
    }
}
