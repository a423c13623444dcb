use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{"n_vertices": 14, "n_edges": 30, "t_total": 60, "t_train": 40, "t_test": 20, "k0_gen": 3, "n_datasets": 2}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topodict"))
}

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "topodict {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fail(dir: &Path, args: &[&str]) -> String {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(!out.status.success(), "topodict {args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> TempDir {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("small.json"), SMALL).unwrap();
    run(tmp.path(), &["generate", "--config", "small.json", "--seed", "3", "--out", "data"]);
    tmp
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn outputs(manifest: &Value) -> Vec<String> {
    manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn assert_same_outputs(a: &Path, b: &Path, names: &[String]) {
    assert!(!names.is_empty());
    for n in names {
        let x = std::fs::read(a.join(n)).unwrap();
        let y = std::fs::read(b.join(n)).unwrap();
        assert!(x == y, "{n} differs between {} and {}", a.display(), b.display());
    }
}

#[test]
fn generate_writes_layout_and_is_deterministic() {
    let tmp = setup();
    let root = tmp.path();
    for k in 0..2 {
        let d = root.join(format!("data/dataset_{k:02}"));
        for f in ["signals.csv", "edges.txt", "polygons.txt", "truth.json", "manifest.json"] {
            assert!(d.join(f).exists(), "{f} missing");
        }
        let signals = std::fs::read_to_string(d.join("signals.csv")).unwrap();
        assert_eq!(signals.lines().count(), 30);
        assert!(signals.lines().all(|l| l.split(',').count() == 60));
        assert_eq!(json(d.join("manifest.json"))["dataset_split"]["t_train"], 40);
    }
    run(root, &["generate", "--config", "small.json", "--seed", "3", "--out", "again"]);
    let m = json(root.join("data/manifest.json"));
    assert_same_outputs(&root.join("data"), &root.join("again"), &outputs(&m));
}

#[test]
fn q_tr_override_reaches_truth() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("small.json"), SMALL).unwrap();
    run(tmp.path(), &["generate", "--config", "small.json", "--q-tr", "0.3", "--out", "d"]);
    assert_eq!(json(tmp.path().join("d/dataset_00/truth.json"))["q_tr"], 0.3);
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("bad.json"), r#"{"q_tr": 1.5}"#).unwrap();
    let err = fail(tmp.path(), &["generate", "--config", "bad.json"]);
    assert!(err.contains("q_tr"), "{err}");
    std::fs::write(tmp.path().join("typo.json"), r#"{"n_vertex": 5}"#).unwrap();
    let err = fail(tmp.path(), &["generate", "--config", "typo.json"]);
    assert!(err.contains("n_vertex"), "{err}");
}

#[test]
fn train_evaluate_and_replay_are_byte_identical() {
    let tmp = setup();
    let root = tmp.path();
    for method in ["gtdl", "rtdl", "fourier", "edge", "joint", "separated"] {
        run(
            root,
            &["train", "data/dataset_00", "--method", method, "--k0", "3", "--imax", "3", "--restarts", "1", "--out", method],
        );
        let model = json(root.join(method).join("model.json"));
        assert!(model["p"].as_array().unwrap().iter().all(|v| v == 0.0 || v == 1.0));
        let trace = std::fs::read_to_string(root.join(method).join("trace.csv")).unwrap();
        assert_eq!(trace.lines().next().unwrap(), "iteration,outer,phase,objective,accepted");
        if method == "fourier" {
            assert!(!trace.contains(",qp,"));
        }
        let replayed = format!("{method}_replay");
        run(root, &["replay", method, "--out", &replayed]);
        let m = json(root.join(method).join("manifest.json"));
        assert_same_outputs(&root.join(method), &root.join(&replayed), &outputs(&m));
    }

    let sweep = "5,10,15,20,25";
    run(
        root,
        &[
            "evaluate", "--dataset", "data/dataset_00", "--model", "gtdl", "--dataset", "data/dataset_01", "--model",
            "separated", "--dataset", "data/dataset_00", "--model", "fourier", "--k0-sweep", sweep, "--out", "res",
        ],
    );
    let csv = std::fs::read_to_string(root.join("res/results.csv")).unwrap();
    // header + 5 rows per method
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    for method in ["gtdl", "separated_hodge", "fourier"] {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("{method},"))).count(), 5);
    }
    let results = json(root.join("res/results.json"));
    assert_eq!(results["runs"].as_array().unwrap().len(), 15);
    assert!(results["aggregate"][0]["error_rate"]["mean"].is_number());

    let before = std::fs::read(root.join("gtdl/model.json")).unwrap();
    run(root, &["replay", "res/manifest.json", "--out", "res2"]);
    assert_eq!(before, std::fs::read(root.join("gtdl/model.json")).unwrap());
    let m = json(root.join("res/manifest.json"));
    assert_same_outputs(&root.join("res"), &root.join("res2"), &outputs(&m));
}

#[test]
fn replay_refuses_changed_inputs() {
    let tmp = setup();
    let root = tmp.path();
    run(root, &["train", "data/dataset_00", "--method", "fourier", "--k0", "2", "--out", "f"]);
    let truth = root.join("data/dataset_00/truth.json");
    let mut text = std::fs::read_to_string(&truth).unwrap();
    text.push('\n');
    std::fs::write(&truth, text).unwrap();
    let err = fail(root, &["replay", "f"]);
    assert!(err.contains("changed"), "{err}");
}

#[test]
fn per_dataset_manifest_replays_one_dataset() {
    let tmp = setup();
    let root = tmp.path();
    run(root, &["replay", "data/dataset_01", "--out", "one"]);
    let m = json(root.join("data/dataset_01/manifest.json"));
    assert_same_outputs(&root.join("data/dataset_01"), &root.join("one"), &outputs(&m));
}

fn write_square(dir: &Path) {
    // square 0-1-2-3 with diagonal 0-2; edges listed out of order, one reversed
    std::fs::write(dir.join("edges.txt"), "2 1\n0 1\n2 3\n0 3\n0 2\n").unwrap();
    let rows = ["1,2,3,4", "5,6,7,8", "9,10,11,12", "13,14,15,16", "17,18,19,20"];
    std::fs::write(dir.join("y.csv"), rows.join("\n") + "\n").unwrap();
}

#[test]
fn ingest_reorders_rows_and_splits_columns() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    write_square(root);
    run(root, &["ingest", "y.csv", "edges.txt", "--split", "3", "--out", "real"]);
    let edges = std::fs::read_to_string(root.join("real/edges.txt")).unwrap();
    assert_eq!(edges, "0 1\n0 2\n0 3\n1 2\n2 3\n");
    let signals = std::fs::read_to_string(root.join("real/signals.csv")).unwrap();
    let lines: Vec<&str> = signals.lines().collect();
    assert_eq!(lines[0], "5.0,6.0,7.0,8.0");
    assert_eq!(lines[3], "-1.0,-2.0,-3.0,-4.0");
    assert_eq!(std::fs::read_to_string(root.join("real/polygons.txt")).unwrap().lines().count(), 2);
    assert!(!root.join("real/truth.json").exists());
    let m = json(root.join("real/manifest.json"));
    assert_eq!(m["dataset_split"]["t_train"], 3);
    assert_eq!(m["dataset_split"]["t_test"], 1);

    run(root, &["train", "real", "--method", "separated", "--k0", "2", "--imax", "2", "--out", "m"]);
    run(root, &["evaluate", "--dataset", "real", "--model", "m", "--k0", "2", "--out", "res"]);
    let results = json(root.join("res/results.json"));
    assert!(results["aggregate"][0]["nmse"]["mean"].is_number());
    assert!(results["aggregate"][0]["error_rate"].is_null());
    let csv = std::fs::read_to_string(root.join("res/results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,"));

    run(root, &["replay", "real", "--out", "real2"]);
    assert_same_outputs(&root.join("real"), &root.join("real2"), &outputs(&m));
}

#[test]
fn ingest_errors_are_specific() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    write_square(root);
    std::fs::write(root.join("short.csv"), "1,2\n3,4\n").unwrap();
    let err = fail(root, &["ingest", "short.csv", "edges.txt", "--split", "1"]);
    assert!(err.contains("2 rows") && err.contains("5 edges"), "{err}");
    std::fs::write(root.join("bad.csv"), "1,2\n3,x\n").unwrap();
    let err = fail(root, &["ingest", "bad.csv", "edges.txt", "--split", "1"]);
    assert!(err.contains("line 2"), "{err}");
    std::fs::write(root.join("empty.csv"), "").unwrap();
    let err = fail(root, &["ingest", "empty.csv", "edges.txt", "--split", "1"]);
    assert!(err.contains("no data"), "{err}");
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = setup();
    let root = tmp.path();
    for (threads, out) in [("1", "t1"), ("3", "t3")] {
        let status = bin()
            .current_dir(root)
            .env("HODGE_THREADS", threads)
            .args(["train", "data/dataset_00", "--method", "gtdl", "--k0", "3", "--imax", "2", "--restarts", "1", "--out", out])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let names = vec!["model.json".to_string(), "trace.csv".to_string()];
    assert_same_outputs(&root.join("t1"), &root.join("t3"), &names);
    let err = bin().current_dir(root).env("HODGE_THREADS", "0").args(["generate", "--out", "x"]).output().unwrap();
    assert!(!err.status.success());
}
