use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5

[corpus]
train = 2
dev = 1
test = 2
min_secs = 1.0
max_secs = 1.3
noise_secs = 4.0
babble_talkers = 2

[train]
max_epochs = 1
batch_size = 4
"#;

fn beamsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsep"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    o
}

/// Writes the small config, a corpus and a no-reverb dataset under `root`.
fn prepare(root: &Path) -> (PathBuf, PathBuf) {
    let cfg = root.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let corpus = root.join("corpus");
    let data = root.join("data");
    ok(beamsep(&["corpus", "--config", s(&cfg), "--out", s(&corpus)]));
    ok(beamsep(&[
        "datagen", "--config", s(&cfg), "--condition", "no_reverb", "--corpus", s(&corpus), "--out", s(&data),
    ]));
    (cfg, data)
}

#[test]
fn no_arguments_is_usage_error() {
    assert_eq!(beamsep(&[]).status.code(), Some(2));
    assert_eq!(beamsep(&["train"]).status.code(), Some(2));
    assert_eq!(beamsep(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_model_is_usage_error() {
    let o = beamsep(&["enhance", "--b0", "a.wav", "--b1", "b.wav", "--out", "x.wav"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--model"));
}

#[test]
fn missing_out_is_usage_error() {
    let o = beamsep(&["beampattern"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn runtime_failure_is_one_line_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = beamsep(&["train", "--dataset", s(&tmp.path().join("none")), "--out", s(&tmp.path().join("m.bin"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
    assert!(!tmp.path().join("m.bin").exists());
}

#[test]
fn unknown_config_key_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[wpe]\nlags = 3\n").unwrap();
    let o = beamsep(&["beampattern", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lags"));
}

#[test]
fn beampattern_csv_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bp");
    ok(beamsep(&["beampattern", "--look", "-30", "--angle-step", "10", "--freq-step", "1000", "--out", s(&out)]));
    let csv = fs::read_to_string(out.join("beampattern.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "angle_deg,freq_hz,gain");
    assert_eq!(lines.len(), 1 + 19 * 9);
    // Unit gain toward the look direction at every frequency.
    for line in lines.iter().filter(|l| l.starts_with("-30,")) {
        let g: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((g - 1.0).abs() < 1e-9, "{line}");
    }
    assert!(out.join("config-lock.json").exists());
}

#[test]
fn rir_writes_quadruple_and_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rir");
    ok(beamsep(&["rir", "--seed", "3", "--index", "2", "--out", s(&out)]));
    for name in ["h00", "h01", "h10", "h11"] {
        assert!(out.join(format!("{name}.wav")).exists());
    }
    let info: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scene.json")).unwrap()).unwrap();
    let d = info["speaker_distance"].as_f64().unwrap();
    assert!((1.6..=2.4).contains(&d));
    let again = tmp.path().join("rir2");
    ok(beamsep(&["rir", "--seed", "3", "--index", "2", "--out", s(&again)]));
    assert_eq!(fs::read(out.join("h01.wav")).unwrap(), fs::read(again.join("h01.wav")).unwrap());
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (cfg, data) = prepare(root);
    for split in ["train", "dev", "test"] {
        assert!(data.join(split).join("manifest.json").exists());
    }
    assert!(data.join("config-lock.json").exists());

    let model = root.join("models/model.bin");
    ok(beamsep(&["train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&model)]));
    assert!(model.exists());
    let history: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("models/model.history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 1);
    let lock: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("models/model.config-lock.json")).unwrap()).unwrap();
    assert_eq!(lock["command"], "train");
    assert_eq!(lock["config"]["seed"], 5);
    assert_eq!(lock["config"]["train"]["max_epochs"], 1);

    // Same seed, same bytes.
    let model2 = root.join("models/again.bin");
    ok(beamsep(&["train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&model2)]));
    assert_eq!(fs::read(&model).unwrap(), fs::read(&model2).unwrap());

    let report = root.join("eval");
    let o = ok(beamsep(&[
        "eval", "--config", s(&cfg), "--model", s(&model), "--dataset", s(&data), "--windows", "160,320", "--out",
        s(&report),
    ]));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("report-w320.json")).unwrap()).unwrap();
    assert_eq!(r["count"], 2);
    assert_eq!(r["window_frames"], 320);
    assert!(r["wer"].is_null());
    assert_eq!(fs::read_to_string(report.join("table.txt")).unwrap(), table);

    // Mean over repeated runs.
    let mean_dir = root.join("eval-mean");
    ok(beamsep(&[
        "eval", "--config", s(&cfg), "--model", s(&model), "--model", s(&model2), "--dataset", s(&data), "--out",
        s(&mean_dir),
    ]));
    assert!(mean_dir.join("report-w160-mean.json").exists());
    assert!(mean_dir.join("report-w160-m1.json").exists());
}

#[test]
fn enhance_keeps_duration_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (cfg, data) = prepare(root);
    let model = root.join("m.bin");
    ok(beamsep(&["train", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&model)]));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("test/manifest.json")).unwrap()).unwrap();
    let files = &manifest["entries"][0]["files"];
    let b0 = data.join("test").join(files["b0"].as_str().unwrap());
    let b1 = data.join("test").join(files["b1"].as_str().unwrap());
    let out = root.join("est/one.wav");
    let args = |o: &Path| {
        vec![
            "enhance".to_string(),
            "--model".into(),
            s(&model).into(),
            "--b0".into(),
            s(&b0).into(),
            "--b1".into(),
            s(&b1).into(),
            "--wpe".into(),
            "--out".into(),
            s(o).into(),
        ]
    };
    let run = |o: &Path| ok(beamsep(&args(o).iter().map(String::as_str).collect::<Vec<_>>()));
    run(&out);
    let input = hound::WavReader::open(&b0).unwrap().duration() as i64;
    let output = hound::WavReader::open(&out).unwrap().duration() as i64;
    assert!((input - output).abs() <= 160, "{input} vs {output}");
    assert!(root.join("est/one.config-lock.json").exists());
    let again = root.join("est/two.wav");
    run(&again);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}
