use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lsp(args);
    assert!(out.status.success(), "lsp {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = lsp(args);
    assert_eq!(out.status.code(), Some(1), "lsp {args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    err
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fit_recovers_well_separated_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let fitted = tmp.path().join("fit");
    ok(&["simulate", "--kind", "a", "--n", "120", "--seed", "3", "--out", &s(&sim)]);
    ok(&["fit", "--input", &s(&sim.join("data.csv")), "--view-width", "2", "--g", "2", "--restarts", "1", "--seed", "3", "--out", &s(&fitted)]);
    for f in ["fit_state.json", "labels.csv", "p_hat_0.csv", "consensus.csv", "loss_history.csv", "summary.txt", "manifest.json"] {
        assert!(fitted.join(f).exists(), "missing {f}");
    }
    let value = ok(&[
        "metrics", "nmi", &s(&fitted.join("labels.csv")), &s(&sim.join("truth_labels.csv")),
        "--column-a", "v0", "--column-b", "label",
    ]);
    assert_eq!(value.trim().parse::<f64>().unwrap(), 1.0);
    let mad = ok(&["metrics", "mad", &s(&fitted.join("p_hat_0.csv")), &s(&sim.join("oracle_coassignment.csv"))]);
    assert!(mad.trim().parse::<f64>().unwrap() < 0.1);
}

#[test]
fn emitted_matrices_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--kind", "b", "--n", "30", "--seed", "1", "--out", &s(&sim)]);
    let data = rows(&sim.join("data.csv"));
    assert_eq!(data[0], vec!["x0", "x1"]);
    assert_eq!(data.len(), 31);
    // Values are written with the shortest exact representation.
    for row in &data[1..] {
        for v in row {
            let x: f64 = v.parse().unwrap();
            assert_eq!(format!("{x}"), *v);
        }
    }
    let oracle = rows(&sim.join("oracle_coassignment.csv"));
    assert_eq!(oracle.len(), 30);
    for (i, row) in oracle.iter().enumerate() {
        assert_eq!(row[i], "1");
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, oracle[j][i]);
        }
    }
    // A matrix compared with itself.
    let path = s(&sim.join("oracle_coassignment.csv"));
    assert_eq!(ok(&["metrics", "mad", &path, &path]).trim(), "0");
}

#[test]
fn empty_or_malformed_input_is_reported_with_the_file_name() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let err = fails(&["fit", "--input", &s(&empty), "--out", &s(&tmp.path().join("o"))]);
    assert!(err.contains("empty.csv"), "{err}");
    assert!(err.starts_with("lsp: error:"), "{err}");

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "x0,x1\n1,2\n3,oops\n").unwrap();
    let err = fails(&["fit", "--input", &s(&bad), "--out", &s(&tmp.path().join("o"))]);
    assert!(err.contains("bad.csv"), "{err}");

    let missing = tmp.path().join("missing.csv");
    let err = fails(&["screen", "--input", &s(&missing), "--top-v", "1"]);
    assert!(err.contains("missing.csv"), "{err}");
}

#[test]
fn view_range_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--kind", "a", "--n", "20", "--out", &s(&sim)]);
    let data = s(&sim.join("data.csv"));
    let out = s(&tmp.path().join("fit"));
    for (views, needle) in [("0-5", "exceeds"), ("1-0", "empty"), ("0-1,1", "overlap"), ("a-b", "not of the form")] {
        let err = fails(&["fit", "--input", &data, "--views", views, "--out", &out]);
        assert!(err.contains(needle), "{views}: {err}");
    }
    let err = fails(&["fit", "--input", &data, "--views", "0", "--view-width", "1", "--out", &out]);
    assert!(err.contains("either"), "{err}");
    let err = fails(&["fit", "--input", &data, "--view-width", "3", "--out", &out]);
    assert!(err.contains("width 3"), "{err}");
}

#[test]
fn settings_layers_override_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.cfg");
    std::fs::write(&config, "# simulation\nkind = b\nn = 40\nseed = 5\n").unwrap();
    let out: PathBuf = tmp.path().join("sim");
    let c = s(&config);
    let o = s(&out);

    ok(&["simulate", "--config", &c, "--out", &o]);
    let m = manifest(&out);
    assert_eq!(m["settings"]["kind"], "b");
    assert_eq!(m["settings"]["n"], "40");
    assert_eq!(m["seed"], 5);

    ok(&["simulate", "--config", &c, "--n", "25", "--out", &o]);
    assert_eq!(manifest(&out)["settings"]["n"], "25");
    assert_eq!(rows(&out.join("data.csv")).len(), 26);

    ok(&["simulate", "--config", &c, "--n", "25", "--set", "n=12", "--set", "seed=9", "--out", &o]);
    let m = manifest(&out);
    assert_eq!(m["settings"]["n"], "12");
    assert_eq!(m["seed"], 9);

    let err = fails(&["simulate", "--config", &c, "--set", "bogus=1", "--out", &o]);
    assert!(err.contains("bogus"), "{err}");
    let err = fails(&["simulate", "--set", "n", "--out", &o]);
    assert!(err.contains("KEY=VALUE") || err.contains("key=value"), "{err}");
}

#[test]
fn screen_keeps_the_most_dispersed_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("wide.csv");
    // sd/median: a = 0 (constant), b = 1/2, c = 4/2, d has median 0.
    std::fs::write(&input, "a,b,c,d\n5,1,-2,0\n5,2,2,1\n5,3,6,0\n").unwrap();
    let out = tmp.path().join("screen");
    ok(&["screen", "--input", &s(&input), "--top-v", "2", "--out", &s(&out)]);
    let selected = rows(&out.join("selected_columns.csv"));
    assert_eq!(selected[1], ["0", "2", "c"]);
    assert_eq!(selected[2], ["1", "1", "b"]);
    let screened = rows(&out.join("screened.csv"));
    assert_eq!(screened[0], vec!["c", "b"]);
    assert_eq!(screened[3], vec!["6", "3"]);

    let err = fails(&["screen", "--input", &s(&input), "--top-v", "5", "--out", &s(&out)]);
    assert!(err.contains("wide.csv"), "{err}");
}

#[test]
fn verify_bound_validates_its_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(&tmp.path().join("b"));
    assert!(fails(&["verify-bound", "--m", "1", "--out", &out]).contains("m must be at least 2"));
    assert!(fails(&["verify-bound", "--delta", "1.5", "--out", &out]).contains("delta"));
    assert!(fails(&["verify-bound", "--delta", "0", "--out", &out]).contains("delta"));
    assert!(fails(&["verify-bound", "--n", "1", "--out", &out]).contains("n must be"));

    ok(&["verify-bound", "--replications", "10", "--set", "heldout_draws=200", "--set", "inner_samples=40", "--out", &out]);
    let summary = rows(&tmp.path().join("b/bound_summary.csv"));
    assert!(summary.len() >= 2);
    let report = rows(&tmp.path().join("b/bound_report.csv"));
    assert_eq!(report.len(), 11);
}

#[test]
fn unknown_simulation_kind_is_rejected() {
    let err = fails(&["simulate", "--kind", "zz", "--out", "unused"]);
    assert!(err.contains("unknown kind 'zz'"), "{err}");
}
