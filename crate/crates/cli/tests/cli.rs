use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tdm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdm"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

/// A small city in `dir/city` with a config trimmed for quick runs.
fn small_city(dir: &Path, seed: &str) -> PathBuf {
    ok(tdm(
        dir,
        &["gen-synthetic", "--seed", seed, "--nodes", "5", "--travelers", "100", "--residents", "40", "--rank", "3", "--out", "city"],
    ));
    let path = dir.join("city/config.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    cfg["scenario"]["seeds"] = serde_json::json!([1, 2, 3]);
    cfg["scenario"]["thetas"] = serde_json::json!([0.0, 0.5, 1.0]);
    cfg["nextloc"]["rnn"]["epochs"] = serde_json::json!(3);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn generated_city_parses_through_ingest() {
    let d = tempfile::tempdir().unwrap();
    small_city(d.path(), "11");
    let o = ok(tdm(d.path(), &["--config", "city/config.json", "--out", "out", "ingest"]));
    assert!(stderr(&o).contains("0 rejected rows"), "{}", stderr(&o));
    let traj: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/trajectories.json")).unwrap()).unwrap();
    assert_eq!(traj.as_array().unwrap().len(), 140);
    assert!(d.path().join("out/manifests/ingest.json").is_file());
}

#[test]
fn missing_upstream_names_the_producer() {
    let d = tempfile::tempdir().unwrap();
    small_city(d.path(), "12");
    let o = tdm(d.path(), &["--config", "city/config.json", "--out", "out", "recommend"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tdm fit-pref"), "{}", stderr(&o));
}

#[test]
fn invalid_config_reports_field_paths() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_city(d.path(), "13");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["bpr"]["beta"] = serde_json::json!(0.5);
    v["scenario"]["compliance_rates"] = serde_json::json!([0.0, 1.5]);
    fs::write(d.path().join("city/bad.json"), v.to_string()).unwrap();
    let o = tdm(d.path(), &["--config", "city/bad.json", "--out", "out", "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bpr.beta"), "{err}");
    assert!(err.contains("scenario.compliance_rates"), "{err}");

    v["bpr"]["beta"] = serde_json::json!(4.0);
    v["plan"]["slotz"] = serde_json::json!([10]);
    fs::write(d.path().join("city/bad.json"), v.to_string()).unwrap();
    let o = tdm(d.path(), &["--config", "city/bad.json", "--out", "out", "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plan.slotz"), "{}", stderr(&o));
}

#[test]
fn usage_and_runtime_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(tdm(d.path(), &["gen-synthetic", "--out", "x"]).status.code(), Some(1));
    assert_eq!(tdm(d.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(tdm(d.path(), &["ingest"]).status.code(), Some(1));
    assert_eq!(tdm(d.path(), &["--version"]).status.code(), Some(0));

    small_city(d.path(), "14");
    fs::write(d.path().join("city/cdr.csv"), "a,b\n1,2\n").unwrap();
    let o = tdm(d.path(), &["--config", "city/config.json", "--out", "out", "ingest"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn full_run_writes_every_grid_row_and_detects_staleness() {
    let d = tempfile::tempdir().unwrap();
    small_city(d.path(), "15");
    ok(tdm(d.path(), &["--config", "city/config.json", "--out", "out", "run"]));
    let out = d.path().join("out");
    assert_eq!(csv_rows(&out.join("results.csv")), 6);
    assert_eq!(csv_rows(&out.join("results_by_seed.csv")), 6 * 3);
    assert_eq!(csv_rows(&out.join("theta_sweep.csv")), 3);
    for name in ["od.csv", "flows.csv", "model.json", "plan.json", "links.csv", "accuracy.csv", "predictions.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    for stage in ["ingest", "od", "assign", "fit-pref", "recommend", "simulate", "sweep", "predict"] {
        assert!(out.join(format!("manifests/{stage}.json")).is_file(), "{stage}");
    }

    // a downstream stage refuses an edited artifact
    let plan = out.join("plan.json");
    let original = fs::read(&plan).unwrap();
    fs::write(&plan, [&original[..], b" "].concat()).unwrap();
    let o = tdm(d.path(), &["--config", "city/config.json", "--out", "out", "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plan.json"), "{}", stderr(&o));
    fs::write(&plan, &original).unwrap();
    ok(tdm(d.path(), &["--config", "city/config.json", "--out", "out", "simulate"]));

    // and one whose raw input changed since it was built
    let cdr = d.path().join("city/cdr.csv");
    let text = fs::read_to_string(&cdr).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    fs::write(&cdr, lines.join("\n") + "\n").unwrap();
    let o = tdm(d.path(), &["--config", "city/config.json", "--out", "out", "od"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tdm ingest"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    small_city(d.path(), "16");
    for out in ["a", "b"] {
        ok(tdm(d.path(), &["--config", "city/config.json", "--out", out, "run"]));
    }
    for name in ["results.csv", "results_by_seed.csv", "plan.json", "model.json", "accuracy.csv", "manifests/sweep.json"] {
        assert_eq!(
            fs::read(d.path().join("a").join(name)).unwrap(),
            fs::read(d.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn bundled_city_regenerates_from_its_seed() {
    let d = tempfile::tempdir().unwrap();
    ok(tdm(d.path(), &["gen-synthetic", "--seed", "7", "--out", "city"]));
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic-city");
    for name in ["cdr.csv", "towers.csv", "nodes.csv", "links.csv", "node_towers.csv", "counts.csv", "config.json"] {
        assert_eq!(
            fs::read(d.path().join("city").join(name)).unwrap(),
            fs::read(bundled.join(name)).unwrap(),
            "{name}"
        );
    }
}
