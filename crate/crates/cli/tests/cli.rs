use std::path::Path;
use std::process::{Command, Output};

fn kitting(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kitting"))
        .args(args)
        .current_dir(dir)
        .env_remove("KITNET_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_hash(o: &Output) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("manifest sha256 "))
        .expect("hash line")
        .to_string()
}

#[test]
fn gen_dataset_is_reproducible_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "--seed",
            "4",
            "--set",
            "dataset.pairs_per_mesh=2",
            "gen-dataset",
            "--out",
            out,
        ]
    };
    let a = kitting(&args("a"), tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = kitting(&args("b"), tmp.path());
    assert_eq!(manifest_hash(&a), manifest_hash(&b));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["total_records"], 40);
    assert_eq!(manifest["seed"], 4);
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/run.json")).unwrap())
            .unwrap();
    assert_eq!(run["command"], "gen-dataset");
    assert_eq!(run["config"]["seed"], 4);
    assert_eq!(
        run["config"]["dataset"]["augmentation"]["pixel_dropout_fraction"],
        0.01
    );
    assert_eq!(run["config"]["suite"]["controller"]["eta"], 0.8);
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_kitting"))
            .args([
                "--set",
                "dataset.pairs_per_mesh=1",
                "gen-dataset",
                "--out",
                out,
            ])
            .current_dir(tmp.path())
            .env("KITNET_SEED", seed)
            .output()
            .unwrap()
    };
    let env = run("4", "env");
    assert!(env.status.success(), "{}", stderr(&env));
    let flag = kitting(
        &[
            "--seed",
            "4",
            "--set",
            "dataset.pairs_per_mesh=1",
            "gen-dataset",
            "--out",
            "flag",
        ],
        tmp.path(),
    );
    assert_eq!(manifest_hash(&env), manifest_hash(&flag));
    assert_eq!(run("not-a-number", "bad").status.code(), Some(2));
}

#[test]
fn config_and_corpus_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = kitting(
        &["gen-dataset", "--corpus", "nowhere", "--out", "d"],
        tmp.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("corpus not found"));
    let unknown = kitting(
        &["--set", "suite.trials_per_cel=3", "run-suite", "--out", "s"],
        tmp.path(),
    );
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("trials_per_cel"));
    std::fs::write(tmp.path().join("cfg.json"), r#"{"dataset": {"pairs": 3}}"#).unwrap();
    let file = kitting(
        &["--config", "cfg.json", "gen-dataset", "--out", "d"],
        tmp.path(),
    );
    assert_eq!(file.status.code(), Some(2));
    let usage = kitting(&["no-such-command"], tmp.path());
    assert_eq!(usage.status.code(), Some(2));
    let runtime = kitting(&["inspect", "absent.kndi"], tmp.path());
    assert_eq!(runtime.status.code(), Some(1));
}

const CHEAP_SUITE: &[&str] = &[
    "--set",
    r#"suite.meshes=["box_bar","ring","l_bracket_a"]"#,
    "--set",
    r#"suite.methods=[{"method":"BASELINE_RANDOM"}]"#,
    "--set",
    "suite.scene.fit_samples=300",
];

#[test]
fn suite_writes_one_record_per_trial_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let mut args = vec!["--seed", "8"];
        args.extend_from_slice(CHEAP_SUITE);
        args.extend_from_slice(&["run-suite", "--out", out]);
        kitting(&args, tmp.path())
    };
    let a = run("a");
    assert!(a.status.success(), "{}", stderr(&a));
    run("b");
    let read = |p: &str| std::fs::read(tmp.path().join(p)).unwrap();
    let results = String::from_utf8(read("a/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 60);
    assert_eq!(read("a/results.jsonl"), read("b/results.jsonl"));
    assert_eq!(read("a/summary.csv"), read("b/summary.csv"));
    assert_eq!(
        String::from_utf8(read("a/timing.jsonl"))
            .unwrap()
            .lines()
            .count(),
        60
    );
    let summary = String::from_utf8(read("a/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 6);
    let run_json: serde_json::Value = serde_json::from_slice(&read("a/run.json")).unwrap();
    assert_eq!(run_json["config"]["suite"]["trials_per_cell"], 10);
}

#[test]
fn unreachable_estimator_is_data_not_a_crash() {
    let tmp = tempfile::tempdir().unwrap();
    let method = r#"suite.methods=[{"method":"CONTROLLER","estimator":{"kind":"EXTERNAL","endpoint":"tcp://127.0.0.1:1","timeout_s":1.0}}]"#;
    let o = kitting(
        &[
            "--set",
            r#"suite.meshes=["box_bar"]"#,
            "--set",
            method,
            "--set",
            "suite.trials_per_cell=2",
            "run-suite",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let results = std::fs::read_to_string(tmp.path().join("s/results.jsonl")).unwrap();
    for line in results.lines() {
        let r: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(r["error"].is_string());
    }
    let summary = std::fs::read_to_string(tmp.path().join("s/summary.csv")).unwrap();
    assert!(
        summary.lines().skip(1).all(|l| l.ends_with(",0")),
        "{summary}"
    );
}

#[test]
fn run_trial_matches_the_suite_record() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["--seed", "8"];
    args.extend_from_slice(CHEAP_SUITE);
    args.extend_from_slice(&["run-suite", "--out", "s"]);
    assert!(kitting(&args, tmp.path()).status.success());
    let o = kitting(
        &[
            "--seed",
            "8",
            "--set",
            "suite.scene.fit_samples=300",
            "--set",
            "trial.mesh=ring",
            "--set",
            "trial.angle_deg=60",
            "--set",
            "trial.index=3",
            "--set",
            r#"trial.method={"method":"BASELINE_RANDOM"}"#,
            "run-trial",
            "--out",
            "t",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut single: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("t/trial.json")).unwrap())
            .unwrap();
    let results = std::fs::read_to_string(tmp.path().join("s/results.jsonl")).unwrap();
    let suite: serde_json::Value = results
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|r| r["trial_id"] == "ring/PRISMATIC/60/3/baseline_random")
        .unwrap();
    single["wall_time"] = 0.0.into();
    assert_eq!(single, suite);
}

#[test]
fn render_inspect_and_frustum_warning() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(kitting(&["write-corpus", "corpus"], tmp.path())
        .status
        .success());
    let o = kitting(
        &[
            "render",
            "corpus/box_cube.obj",
            "--out",
            "cube.kndi",
            "--png",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("cube.png").exists());
    assert!(tmp.path().join("cube.kndi.json").exists());
    let info = stdout(&kitting(&["inspect", "cube.kndi"], tmp.path()));
    assert!(info.contains("size        128 x 128"), "{info}");
    let fg: usize = info
        .lines()
        .find_map(|l| l.strip_prefix("foreground  "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(fg > 0);
    let far = kitting(
        &[
            "render",
            "corpus/box_cube.obj",
            "--translation",
            "5,0,0.3",
            "--out",
            "far.kndi",
        ],
        tmp.path(),
    );
    assert!(far.status.success());
    assert!(stderr(&far).contains("outside the view frustum"));
    let info = stdout(&kitting(&["inspect", "far.kndi"], tmp.path()));
    assert!(info.contains("foreground  0 of 16384"), "{info}");
    let bad = kitting(
        &[
            "render",
            "corpus/box_cube.obj",
            "--quat",
            "1,0,0",
            "--out",
            "x.kndi",
        ],
        tmp.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}
