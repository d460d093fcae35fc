use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use strata_balance::cohort::Arm;
use strata_balance::pipeline::recount_balanced_csv;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata-balance"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) {
    let o = bin(args, dir);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

const SMALL: &[&str] = &[
    "--set",
    "synth_n_alone=200",
    "--set",
    "synth_n_chemo=300",
    "--set",
    "synth_external_n=400",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().chain(SMALL).copied().collect()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn experiment_is_deterministic_and_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["experiment", "--alpha", "15", "--replicates", "50", "--seed", "5"]);
    let mut a = args.clone();
    a.extend(["--out", "a"]);
    let mut b = args.clone();
    b.extend(["--out", "b"]);
    ok(&a, dir.path());
    ok(&b, dir.path());
    let (ta, tb) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(!ta.is_empty());
    assert!(ta == tb, "output trees differ");

    let table = fs::read_to_string(dir.path().join("a/internal_corrected.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 7);
    for arm_model in ["model_3a_one-to-one", "model_3b_one-to-one"] {
        let base = dir.path().join("a/balanced");
        let alone = recount_balanced_csv(&base.join(format!("{arm_model}_{}.csv", Arm::SurgeryAlone.label()))).unwrap();
        let chemo = recount_balanced_csv(&base.join(format!("{arm_model}_{}.csv", Arm::SurgeryChemo.label()))).unwrap();
        assert_eq!(alone, chemo);
    }
}

#[test]
fn strata_sweep_writes_one_report_per_strata_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&with_small(&["experiment", "--alpha", "15", "--replicates", "50", "--out", "o"]), dir.path());
    ok(&with_small(&["validate-external", "--out", "o"]), dir.path());
    let ext = dir.path().join("o/external/synthetic-alone");
    let mut names: Vec<String> = fs::read_dir(&ext)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("model_3a_one-to-one_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["model_3a_one-to-one_S10.csv", "model_3a_one-to-one_S7.csv", "model_3a_one-to-one_S8.csv", "model_3a_one-to-one_S9.csv"]
    );
    // Chemo models never appear under the surgery-alone external cohort.
    assert!(fs::read_dir(&ext).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().contains("model_3b")));
}

#[test]
fn arm_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    ok(&with_small(&["synth", "--out", "syn"]), dir.path());
    ok(
        &with_small(&[
            "fit", "--out", "fit", "--set", "fit_arm=chemo", "--set", "dev_cohort=syn/cohort.csv", "--set", "schema=syn/schema.csv",
        ]),
        dir.path(),
    );
    let before = fs::read(dir.path().join("syn/external_alone.csv")).unwrap();
    let o = bin(
        &[
            "validate-external",
            "--out",
            "val",
            "--set",
            "models=fit/model.json",
            "--set",
            "schema=syn/schema.csv",
            "--set",
            "external=syn/external_alone.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("refusing"));
    assert!(dir.path().join("val/FAILED").exists());
    assert_eq!(fs::read(dir.path().join("syn/external_alone.csv")).unwrap(), before);

    ok(
        &[
            "validate-external",
            "--out",
            "val",
            "--set",
            "models=fit/model.json",
            "--set",
            "schema=syn/schema.csv",
            "--set",
            "external=syn/external_chemo.csv",
        ],
        dir.path(),
    );
    assert!(!dir.path().join("val/FAILED").exists());
    assert!(dir.path().join("val/external/external_chemo/model_2b_S8.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["fit", "--set", "no_such_key=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["sensitivity", "--set", "strata_set=6,8", "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("s/FAILED").exists());
    let o = bin(&["balance", "--alpha", "grid", "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_paths_resolve_next_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&with_small(&["synth", "--out", "data/syn"]), dir.path());
    fs::write(
        dir.path().join("data/run.cfg"),
        "# fit on the generated cohort\ndev_cohort = syn/cohort.csv\nschema = syn/schema.csv\nfit_arm = alone\nout = fitted\n",
    )
    .unwrap();
    ok(&["fit", "--config", "data/run.cfg"], dir.path());
    let coef = fs::read_to_string(dir.path().join("data/fitted/coefficients.csv")).unwrap();
    assert_eq!(coef.lines().count(), 1 + 9);
}

#[test]
fn sensitivity_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&[
        "sensitivity",
        "--alpha",
        "15",
        "--out",
        "s",
        "--set",
        "feature_subsets=age,cea,nodal;age,diameter,kras,margin_r1",
    ]);
    ok(&args, dir.path());
    let runs = fs::read_dir(dir.path().join("s/runs")).unwrap().count();
    assert_eq!(runs, 8);
    let rows = fs::read_to_string(dir.path().join("s/comparison.csv")).unwrap().lines().count() - 1;
    // Two subsets x strata 7..=10, for each of the two external cohorts.
    assert_eq!(rows, 2 * (7 + 8 + 9 + 10) * 2);
}

#[test]
fn smote_compare_has_every_method_in_every_stratum() {
    let dir = tempfile::tempdir().unwrap();
    ok(&with_small(&["smote-compare", "--alpha", "15", "--out", "m"]), dir.path());
    let t = fs::read_to_string(dir.path().join("m/smote_compare/synthetic-chemo_S9.csv")).unwrap();
    let mut lines = t.lines();
    assert_eq!(lines.next().unwrap(), "method,model,stratum,lo,hi,n,n_events,C,AUC");
    for method in ["none", "matching", "smote"] {
        let strata: Vec<&str> = t
            .lines()
            .filter(|l| l.starts_with(&format!("{method},")))
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        let expected: Vec<String> = (0..9).map(|s| s.to_string()).collect();
        assert_eq!(strata, expected);
    }
}
