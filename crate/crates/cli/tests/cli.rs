use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"{
  "modes": [
    {"scaled_freq": 0.012, "damping_ratio": 0.03},
    {"scaled_freq": 0.021, "damping_ratio": 0.02},
    {"scaled_freq": 0.034, "damping_ratio": 0.04}
  ],
  "n_channels": 12,
  "n_maneuvers": 3,
  "samples_per_maneuver": 800,
  "lead_in": 200,
  "gap": 200,
  "trailing_samples": 300,
  "noise_snr_db": 20.0,
  "outlier_fraction": 0.0
}"#;

const CONFIG: &str = "# small test point
ingestion.window_length = 800
ingestion.maneuver_count = 3
delay.d = 100
sparsity.n_gammas = 60
";

fn aeromodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeromodal"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the synthetic test point and config into `dir`.
fn prepare(dir: &Path, format: &str) {
    fs::write(dir.join("spec.json"), SPEC).unwrap();
    fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    let out = aeromodal(&[
        "synth",
        "--spec",
        s(&dir.join("spec.json")),
        "--seed",
        "3",
        "--out",
        s(dir),
        "--format",
        format,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn report_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_then_run_writes_report_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "csv");
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.as_array().unwrap().len(), 3);

    let out_dir = dir.path().join("out");
    let out = aeromodal(&[
        "run",
        "--input",
        s(&dir.path().join("channels.csv")),
        "--config",
        s(&dir.path().join("run.cfg")),
        "--out",
        s(&out_dir),
    ]);
    let code = out.status.code().unwrap();
    let report = report_json(&out_dir.join("report.json"));
    let converged = report["provenance"]["converged"].as_bool().unwrap();
    assert_eq!(code, if converged { 0 } else { 4 });
    assert_eq!(report["test_point_id"], "channels");
    assert_eq!(report["provenance"]["delay"], 100);
    let freqs: Vec<f64> = report["modes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| !m["is_static"].as_bool().unwrap())
        .map(|m| m["scaled_freq"].as_f64().unwrap())
        .collect();
    for f in [0.012, 0.021, 0.034] {
        assert!(freqs.iter().any(|e| (e - f).abs() / f < 0.01), "{f} not in {freqs:?}");
    }
    for file in [
        "diagnostics.json",
        "singular_values.csv",
        "reconstruction_history.csv",
        "gamma_sweep.csv",
        "timings.csv",
        "timing.json",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let sv = fs::read_to_string(out_dir.join("singular_values.csv")).unwrap();
    assert!(sv.starts_with("index,sigma\n1,"));
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "bin");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        aeromodal(&[
            "run",
            "--input",
            s(&dir.path().join("channels.bin")),
            "--config",
            s(&dir.path().join("run.cfg")),
            "--out",
            s(&out_dir),
        ]);
        reports.push(fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let cmp = aeromodal(&[
        "compare",
        "--a",
        s(&dir.path().join("a/report.json")),
        "--b",
        s(&dir.path().join("b/report.json")),
    ]);
    assert!(cmp.status.success());
    assert!(!String::from_utf8_lossy(&cmp.stdout).is_empty());
}

#[test]
fn limited_run_writes_measurement() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "csv");
    let out_dir = dir.path().join("lim");
    let out = aeromodal(&[
        "run",
        "--input",
        s(&dir.path().join("channels.csv")),
        "--config",
        s(&dir.path().join("run.cfg")),
        "--limited",
        "--kind",
        "single_pixel",
        "--p",
        "6",
        "--seed",
        "1",
        "--format",
        "csv",
        "--out",
        s(&out_dir),
    ]);
    assert!(
        matches!(out.status.code(), Some(0) | Some(4)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let header = fs::read_to_string(out_dir.join("measurement.csv")).unwrap();
    assert!(header.starts_with("kind=single_pixel,p=6,n=12,seed=1"), "{header}");
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("scaled_freq,"));
}

#[test]
fn sweep_reports_each_candidate() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "csv");
    let curve = dir.path().join("curve.csv");
    let out = aeromodal(&[
        "sweep-d",
        "--input",
        s(&dir.path().join("channels.csv")),
        "--config",
        s(&dir.path().join("run.cfg")),
        "--candidates",
        "20,60,100",
        "--out",
        s(&curve),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("# recommended d = "));
    let written = fs::read_to_string(curve).unwrap();
    assert_eq!(written.lines().count(), 4);
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "csv");
    fs::write(dir.path().join("bad.cfg"), "delay.d = 100\n\n# note\nrpca.lamda = 2\n").unwrap();
    let out = aeromodal(&[
        "run",
        "--input",
        s(&dir.path().join("channels.csv")),
        "--config",
        s(&dir.path().join("bad.cfg")),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let missing = aeromodal(&["run", "--input", s(&dir.path().join("nope.csv"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn undetectable_record_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("time,ch_a,ch_b\n");
    for t in 0..3000 {
        text.push_str(&format!("{t},0,0\n"));
    }
    fs::write(dir.path().join("flat.csv"), text).unwrap();
    fs::write(dir.path().join("run.cfg"), CONFIG).unwrap();
    let out_dir = dir.path().join("o");
    let out = aeromodal(&[
        "run",
        "--input",
        s(&dir.path().join("flat.csv")),
        "--config",
        s(&dir.path().join("run.cfg")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detect"));
    assert!(out_dir.join("diagnostics.json").exists());
}
