
use proptest::prelude::*;
use strata_balance::cohort::{
    impute, read_cohort, write_cohort, Arm, Cohort, Covariate, CovariateKind, CovariateSchema, PatientRecord,
};

fn schema() -> CovariateSchema {
    CovariateSchema::new(vec![
        Covariate::new("age", CovariateKind::Numeric),
        Covariate::new("nodal", CovariateKind::Binary),
        Covariate::new("t_category", CovariateKind::Ordinal),
    ])
    .unwrap()
}

fn record_strategy() -> impl Strategy<Value = (Option<f64>, Option<bool>, Option<u8>, f64, bool, bool)> {
    (
        proptest::option::weighted(0.8, -1e6f64..1e6),
        proptest::option::weighted(0.8, any::<bool>()),
        proptest::option::weighted(0.8, 0u8..5),
        1e-6f64..500.0,
        any::<bool>(),
        any::<bool>(),
    )
}

fn build(rows: &[(Option<f64>, Option<bool>, Option<u8>, f64, bool, bool)]) -> Cohort {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (a, n, t, time, e, chemo))| PatientRecord {
            id: format!("id{i}"),
            covariates: vec![*a, n.map(|b| b as u8 as f64), t.map(f64::from)],
            time_months: *time,
            event: *e,
            arm: if *chemo { Arm::SurgeryChemo } else { Arm::SurgeryAlone },
        })
        .collect();
    Cohort::new(schema(), records, "prop").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn csv_round_trip_is_lossless(rows in proptest::collection::vec(record_strategy(), 1..40)) {
        let c = build(&rows);
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c, &[]).unwrap();
        let back = read_cohort(buf.as_slice(), &schema(), "mem").unwrap();
        prop_assert_eq!(back.excluded_rows, 0);
        prop_assert_eq!(back.cohort.records(), c.records());
    }

    #[test]
    fn imputation_is_idempotent_and_fills_everything(rows in proptest::collection::vec(record_strategy(), 1..40)) {
        let c = build(&rows);
        prop_assume!((0..3).all(|k| c.records().iter().any(|r| r.covariates[k].is_some())));
        let (once, report) = impute(&c).unwrap();
        prop_assert!(!once.has_missing());
        let missing: usize = c.records().iter().map(|r| r.covariates.iter().filter(|v| v.is_none()).count()).sum();
        prop_assert_eq!(report.total_missing(), missing);
        let (twice, report2) = impute(&once).unwrap();
        prop_assert_eq!(twice.records(), once.records());
        prop_assert_eq!(report2.total_missing(), 0);
        // Observed cells are never altered.
        for (a, b) in c.records().iter().zip(once.records()) {
            for (x, y) in a.covariates.iter().zip(&b.covariates) {
                if let Some(x) = x {
                    prop_assert_eq!(Some(*x), *y);
                }
            }
        }
    }
}

#[test]
fn rows_without_outcome_are_excluded_and_bad_cells_are_located() {
    let csv = "id,time_months,event,arm,age,nodal,t_category\n\
               a,10,1,alone,60,1,2\n\
               b,,1,chemo,61,0,3\n\
               c,12,0,chemo,,1,\n";
    let out = read_cohort(csv.as_bytes(), &schema(), "mem").unwrap();
    assert_eq!(out.excluded_rows, 1);
    assert_eq!(out.cohort.len(), 2);
    assert!(out.cohort.records()[1].has_missing());

    let bad = "id,time_months,event,arm,age,nodal,t_category\na,10,1,alone,sixty,1,2\n";
    let err = read_cohort(bad.as_bytes(), &schema(), "mem").unwrap_err().to_string();
    assert!(err.contains("age"), "{err}");
}

#[test]
fn imputation_uses_median_and_mode() {
    let rows = [
        (Some(1.0), Some(true), Some(2), 1.0, true, false),
        (Some(5.0), Some(true), Some(2), 2.0, true, false),
        (Some(2.0), Some(false), Some(4), 3.0, true, false),
        (None, None, None, 4.0, true, false),
    ];
    let (c, r) = impute(&build(&rows)).unwrap();
    assert_eq!(c.records()[3].values(), vec![2.0, 1.0, 2.0]);
    assert_eq!(r.entries[0].method, "median");
    assert_eq!(r.entries[1].method, "mode");
}
