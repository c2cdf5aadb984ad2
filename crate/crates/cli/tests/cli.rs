use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn locflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SUITE: &str = r#"{
  "name": "small",
  "seed": 5,
  "checks": [
    {"name": "ibp", "check": {"ibp_corpus": {"cases": 6, "n": 32}}},
    {"name": "moser", "check": {"moser_recursion": {"levels": [16, 32], "samples": 10}}},
    {"name": "control", "check": {"flow_conditions_control": {"n": 24}}}
  ]
}"#;

#[test]
fn scenario_writes_field_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = locflow(&[
        "scenario",
        "flat",
        "--dim",
        "4",
        "--n",
        "16",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metric.json")).unwrap()).unwrap();
    assert_eq!(header["version"], "locflow-field-v1");
    assert_eq!(header["field_kind"], "metric");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "flat");
    assert_eq!(manifest["oracle"]["riemann_zero"], true);
}

#[test]
fn seeded_scenarios_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let args = [
            "--seed",
            seed,
            "scenario",
            "perturbed_flat",
            "--dim",
            "2",
            "--n",
            "24",
            "--amplitude",
            "0.05",
        ];
        let mut all: Vec<&str> = args.to_vec();
        all.extend(["--wavenumber", "2", "--out", p(&out)]);
        assert_eq!(code(&locflow(&all)), 0);
        fs::read(out.join("metric.json")).unwrap()
    };
    assert_eq!(run("7", "a"), run("7", "b"));
    assert_ne!(run("7", "a"), run("8", "c"));
}

#[test]
fn usage_errors_exit_2() {
    let o = locflow(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&locflow(&["scenario", "nowhere", "--out", p(dir.path())])),
        2
    );
    assert_eq!(code(&locflow(&["verify", "/nonexistent/suite.json"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"cutoff": {"kind": "constant", "value": 1.0}, "colour": 1}"#,
    )
    .unwrap();
    assert_eq!(
        code(&locflow(&["flow", p(&bad), "--out", p(dir.path())])),
        2
    );
}

#[test]
fn curvature_and_volume_on_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    assert_eq!(
        code(&locflow(&[
            "scenario",
            "flat",
            "--dim",
            "2",
            "--n",
            "32",
            "--out",
            p(&s)
        ])),
        0
    );
    let metric = s.join("metric.json");
    let c = dir.path().join("c");
    assert_eq!(
        code(&locflow(&["curvature", p(&metric), "--out", p(&c)])),
        0
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("summary.json")).unwrap()).unwrap();
    for t in summary["tensors"].as_array().unwrap() {
        assert_eq!(t["max_norm"].as_f64().unwrap(), 0.0);
    }
    let v = dir.path().join("v");
    assert_eq!(
        code(&locflow(&[
            "volume",
            p(&metric),
            "--radii",
            "0.2,0.3",
            "--out",
            p(&v)
        ])),
        0
    );
    let csv = fs::read_to_string(v.join("volume.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("r,vol,vol_over_r4"));
}

#[test]
fn flow_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.json");
    fs::write(
        &ok,
        r#"{
          "scenario": {"name": "perturbed_flat", "params": {"amplitude": 0.05, "wavenumber": 2, "seed": 1}, "dim": 2, "n": 32},
          "cutoff": {"kind": "ball", "radius": 0.3},
          "flow": {"t_target": 0.004},
          "checks": ["flow_conditions"]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("ok");
    let o = locflow(&["flow", p(&ok), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv
        .starts_with("t,dt,sup_phi2_Rm,L2_Rm_supp,eig_min_ratio,eig_max_ratio,sobolev_A,vol_ball"));
    assert!(out.join("flow_conditions.json").exists());

    let failing = dir.path().join("fail.json");
    fs::write(
        &failing,
        r#"{
          "scenario": {"name": "conformal_torus", "params": {"amplitude": 0.9}, "dim": 2, "n": 32},
          "cutoff": {"kind": "constant", "value": 1.0},
          "flow": {"t_target": 0.2, "eigen_floor": 0.9}
        }"#,
    )
    .unwrap();
    assert_eq!(
        code(&locflow(&[
            "flow",
            p(&failing),
            "--out",
            p(&dir.path().join("f"))
        ])),
        3
    );
}

#[test]
fn verify_writes_reports_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    fs::write(&suite, SMALL_SUITE).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = locflow(&["--threads", threads, "verify", p(&suite), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        let mut names: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        let files: Vec<_> = names
            .iter()
            .map(|n| (n.clone(), fs::read(out.join(n)).unwrap()))
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<String> = outputs[0]
        .iter()
        .map(|(n, _)| n.to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["control.json", "ibp.json", "moser.json", "summary.csv"]
    );
}

#[test]
fn verify_exits_1_on_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    // Small data never leaves the metric-equivalence band, so the control fails.
    fs::write(
        &suite,
        r#"{"name": "f", "checks": [{"name": "weak", "check": {"flow_conditions_control": {"amplitude": 0.01, "n": 24, "t_target": 0.05}}}]}"#,
    )
    .unwrap();
    let o = locflow(&["verify", p(&suite), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("weak,flow_conditions_control,fail"));
}
