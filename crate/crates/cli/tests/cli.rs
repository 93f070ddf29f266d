use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn inodo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inodo"))
        .args(args)
        .env_remove("INODO_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = inodo(args);
    assert!(
        out.status.success(),
        "inodo {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--output-dir", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn simulate_walk_writes_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("walk.toml");
    fs::write(
        &profile,
        "kind = \"walk\"\nduration = 120.0\nspeed_min = 1.2\nspeed_max = 1.2\n\n[turns]\nmode = \"straight\"\n",
    )
    .unwrap();
    let config = dir.path().join("sim.toml");
    fs::write(
        &config,
        "profile = \"walk.toml\"\nnoise = \"consumer-mems\"\nseed = 9\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    ok(&["simulate", "--config", p(&config), "--output-dir", p(&a)]);
    assert_eq!(rows(&a.join("imu.csv")).len(), 12_000);
    assert_eq!(rows(&a.join("truth.csv")).len(), 12_001);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([9, 9]));
    assert_eq!(manifest["hashes"]["profile_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let b = dir.path().join("b");
    ok(&["simulate", "--config", p(&config), "--output-dir", p(&b)]);
    for f in ["imu.csv", "truth.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_profile_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let out = inodo(&["simulate", "--profile", p(&missing), "--output-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.toml"), "{}", stderr(&out));
}

#[test]
fn output_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_inodo"))
        .args(["simulate", "--kind", "walk", "--duration", "2"])
        .env("INODO_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("imu.csv").is_file());
}

#[test]
fn sins_on_clean_data_reaches_the_truth_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "walk",
        &["--kind", "walk", "--duration", "10", "--seed", "3"],
    );
    let tracks = dir.path().join("tracks");
    ok(&[
        "track",
        "--dataset",
        p(&data),
        "--trackers",
        "sins",
        "--output-dir",
        p(&tracks),
    ]);
    let est = rows(&tracks.join("sins.csv"));
    let truth = rows(&data.join("truth.csv"));
    assert_eq!(est.len(), truth.len());
    let (e, t) = (est.last().unwrap(), truth.last().unwrap());
    assert!((e[0] - t[0]).abs() < 1e-9);
    assert!((e[1] - t[1]).hypot(e[2] - t[2]) <= 1e-6);
}

#[test]
fn pdr_warns_on_trolley_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "trolley",
        &["--kind", "trolley", "--duration", "30", "--noise", "consumer-mems"],
    );
    let out = ok(&[
        "track",
        "--dataset",
        p(&data),
        "--trackers",
        "pdr",
        "--output-dir",
        p(&dir.path().join("t")),
    ]);
    assert!(stderr(&out).contains("warning: pdr detected"), "{}", stderr(&out));
}

#[test]
fn ionet_requires_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "walk", &["--kind", "walk", "--duration", "5"]);
    let out = inodo(&[
        "track",
        "--dataset",
        p(&data),
        "--trackers",
        "ionet",
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("needs weights"), "{}", stderr(&out));
}

fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "--dataset",
        p(data),
        "--hidden-size",
        "4",
        "--epochs",
        "2",
        "--window-len",
        "100",
        "--stride",
        "25",
        "--seed",
        "5",
        "--output-dir",
        p(out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn train_resume_and_dense_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "walk",
        &["--kind", "walk", "--duration", "31", "--noise", "consumer-mems"],
    );
    let (a, b) = (dir.path().join("run-a"), dir.path().join("run-b"));
    train(&data, &a, &[]);
    train(&data, &b, &[]);
    let history = fs::read_to_string(a.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(rows(&a.join("loss_history.csv")).len(), 3);
    assert_eq!(history, fs::read_to_string(b.join("loss_history.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("weights.json")).unwrap(),
        fs::read(b.join("weights.json")).unwrap()
    );

    let resumed = dir.path().join("resumed");
    train(&data, &resumed, &["--resume", p(&a.join("weights.json"))]);
    let epochs: Vec<f64> = rows(&resumed.join("loss_history.csv")).iter().map(|r| r[0]).collect();
    assert_eq!(epochs, vec![2.0, 3.0, 4.0]);
    let weights: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(resumed.join("weights.json")).unwrap()).unwrap();
    assert_eq!(weights["epochs_trained"], 4);

    let tracks = dir.path().join("tracks");
    ok(&[
        "track",
        "--dataset",
        p(&data),
        "--trackers",
        "ionet",
        "--weights",
        p(&a.join("weights.json")),
        "--chain",
        "dense",
        "--output-dir",
        p(&tracks),
    ]);
    let est = rows(&tracks.join("ionet.csv"));
    assert_eq!(est[0][0], 0.0);
    for w in est.windows(2) {
        assert!((w[1][0] - w[0][0] - 0.1).abs() < 1e-9);
    }
}

#[test]
fn eval_reports_each_tracker() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "walk",
        &[
            "--kind",
            "walk",
            "--duration",
            "20",
            "--seed",
            "4",
            "--noise",
            "consumer-mems",
        ],
    );
    let tracks = dir.path().join("tracks");
    ok(&[
        "track",
        "--dataset",
        p(&data),
        "--trackers",
        "sins,pdr",
        "--output-dir",
        p(&tracks),
    ]);

    let exact = dir.path().join("exact.csv");
    let mut text = String::from("t,x,y,psi\n");
    for r in rows(&data.join("truth.csv")) {
        text.push_str(&format!("{},{},{},0\n", r[0], r[1], r[2]));
    }
    fs::write(&exact, text).unwrap();

    let report_dir = dir.path().join("report");
    let exact_arg = format!("exact={}", p(&exact));
    ok(&[
        "eval",
        "--truth",
        p(&data),
        "--tracks",
        p(&tracks),
        "--estimate",
        &exact_arg,
        "--output-dir",
        p(&report_dir),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(report["seeds"], serde_json::json!([4]));
    let trackers = report["trackers"].as_array().unwrap();
    let names: Vec<_> = trackers.iter().map(|t| t["tracker"].as_str().unwrap()).collect();
    assert_eq!(names, ["exact", "pdr", "sins"]);
    let exact = &trackers[0];
    for key in ["p50_error", "p90_error", "max_error", "endpoint_error"] {
        assert_eq!(exact[key], 0.0, "{key}");
    }
    assert!(trackers[2]["p90_error"].as_f64().unwrap() > 0.0);
    assert!(report_dir.join("cdf_sins.csv").is_file() && report_dir.join("errors_pdr.csv").is_file());
}

#[test]
fn eval_surfaces_alignment_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "walk", &["--kind", "walk", "--duration", "2"]);
    let late = dir.path().join("late.csv");
    fs::write(&late, "t,x,y,psi\n50,0,0,0\n").unwrap();
    let arg = format!("late={}", p(&late));
    let out = inodo(&[
        "eval",
        "--truth",
        p(&data),
        "--estimate",
        &arg,
        "--grid-rate",
        "0",
        "--output-dir",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("alignment"), "{}", stderr(&out));
}
