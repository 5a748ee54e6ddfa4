//! Runs the `unite` binary end to end on a small generated data set.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unite"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("unite-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic data set shared by the tests.
fn data() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch("data");
        let out = run(&[
            "gen-data",
            "--segments",
            "40",
            "--trips",
            "150",
            "--seed",
            "4",
            "--output",
            s(&dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        dir
    })
}

fn file(name: &str) -> String {
    s(&data().join(name)).to_string()
}

#[test]
fn help_lists_every_option() {
    let out = run(&["evaluate", "--help"]);
    assert_eq!(code(&out), 0);
    let help = stdout(&out);
    for flag in [
        "--config",
        "--network",
        "--train",
        "--validation",
        "--trajectories",
        "--history",
        "--store",
        "--model",
        "--output",
        "--algorithm",
        "--k",
        "--mean-factor",
        "--std-factor",
        "--c",
        "--delta",
        "--arrival-mode",
        "--lr",
        "--epochs",
        "--batch-size",
        "--total-steps",
        "--seed",
        "--a",
        "--epsilon",
        "--route",
        "--departure",
        "--count-delta",
        "--sweep",
        "--fractions",
        "--grid-c",
        "--grid-delta",
        "--parallel",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&run(&["evaluate", "--no-such-flag", "1"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(
        code(&run(&[
            "evaluate",
            "--algorithm",
            "gru",
            "--k",
            "2",
            "--output",
            "x"
        ])),
        2
    );
    assert_eq!(
        code(&run(&["evaluate", "--algorithm", "knn", "--output", "x"])),
        2
    );
    assert_eq!(
        code(&run(&[
            "train",
            "--algorithm",
            "unite-gen",
            "--output",
            "x"
        ])),
        2
    );
    let dir = scratch("badconf");
    let conf = dir.join("bad.conf");
    std::fs::write(&conf, "learning_rate = 0.1\n").unwrap();
    assert_eq!(code(&run(&["train", "--config", s(&conf)])), 2);
}

#[test]
fn malformed_data_exits_with_3() {
    let dir = scratch("baddata");
    let net = dir.join("network.csv");
    std::fs::write(&net, "segment_id,source,target\nonly,three,columns\n").unwrap();
    let out = run(&[
        "evaluate",
        "--algorithm",
        "agg",
        "--network",
        s(&net),
        "--history",
        &file("train.csv"),
        "--trajectories",
        &file("test.csv"),
        "--output",
        s(&dir.join("out")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_evaluate_and_reproduce_from_the_manifest() {
    let dir = scratch("train");
    let model = dir.join("gru");
    let out = run(&[
        "train",
        "--algorithm",
        "gru",
        "--network",
        &file("network.csv"),
        "--train",
        &file("train.csv"),
        "--validation",
        &file("validation.csv"),
        "--epochs",
        "1",
        "--batch-size",
        "16",
        "--seed",
        "3",
        "--output",
        s(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "model.json",
        "history.csv",
        "training.json",
        "manifest.json",
        "run.conf",
    ] {
        assert!(model.join(f).exists(), "{f}");
    }
    let checkpoint = model.join("model.json");
    let first = dir.join("eval1");
    let out = run(&[
        "evaluate",
        "--algorithm",
        "unite-gen",
        "--network",
        &file("network.csv"),
        "--history",
        &file("train.csv"),
        "--trajectories",
        &file("test.csv"),
        "--model",
        s(&checkpoint),
        "--c",
        "0",
        "--delta",
        "120",
        "--output",
        s(&first),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["algorithm"], "unite-gen");
    assert!(metrics["nll"].as_f64().unwrap().is_finite());

    // the saved config reproduces the run; the flag overrides only the output
    let second = dir.join("eval2");
    let out = run(&[
        "evaluate",
        "--config",
        s(&first.join("run.conf")),
        "--output",
        s(&second),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(first.join("metrics.json")).unwrap(),
        std::fs::read_to_string(second.join("metrics.json")).unwrap()
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(second.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["config"]["delta"], "120");
    assert!(manifest["version"].is_string());
}

#[test]
fn estimate_prints_one_line_per_segment_and_a_travel_time() {
    let test = std::fs::read_to_string(data().join("test.csv")).unwrap();
    let mut lines = test
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>());
    let (a, b) = (lines.next().unwrap(), lines.next().unwrap());
    assert_eq!(a[0], b[0], "first trip has at least two traversals");
    let route = format!("{},{}", a[2], b[2]);
    let dir = scratch("estimate");
    let out = run(&[
        "estimate",
        "--algorithm",
        "agg",
        "--network",
        &file("network.csv"),
        "--history",
        &file("train.csv"),
        "--route",
        &route,
        "--departure",
        "30000",
        "--output",
        s(&dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with(a[2]) && lines[1].starts_with(b[2]));
    assert!(lines[2].starts_with("travel_time_s "));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(json["segments"].as_array().unwrap().len(), 2);
}

#[test]
fn robustness_and_selection_sweep_write_curves() {
    let dir = scratch("curves");
    let store = dir.join("store.bin");
    let out = run(&[
        "robustness",
        "--algorithm",
        "agg",
        "--network",
        &file("network.csv"),
        "--history",
        &file("train.csv"),
        "--store",
        s(&store),
        "--trajectories",
        &file("test.csv"),
        "--output",
        s(&dir.join("rob")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(store.exists());
    let curve = std::fs::read_to_string(dir.join("rob/robustness.csv")).unwrap();
    assert!(curve.starts_with("bucket,count,mean_snll\n") && curve.lines().count() > 1);

    let out = run(&[
        "sweep",
        "--sweep",
        "selection",
        "--algorithm",
        "agg",
        "--network",
        &file("network.csv"),
        "--store",
        s(&store),
        "--trajectories",
        &file("test.csv"),
        "--grid-c",
        "0,2",
        "--grid-delta",
        "30,120",
        "--parallel",
        "--output",
        s(&dir.join("grid")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = std::fs::read_to_string(dir.join("grid/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
}
