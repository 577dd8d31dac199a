use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfc-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn dry_vs_wet_config_produces_table_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "output_dir": "results",
        "jobs": 2,
        "scenarios": ["tracklike_mfc"],
        "grid": {"mu": [1.0, 0.7], "controllers": ["mfc", "flat", "pid"]}
    }"#;
    fs::write(dir.path().join("dry_vs_wet.json"), cfg).unwrap();
    let o = lab(&["run", "--config", "dry_vs_wet.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("results");
    for mu in ["1", "0.7"] {
        for c in ["mfc", "flat", "pid"] {
            assert!(out
                .join(format!("tracklike_mfc_{c}_mu{mu}.trace.csv"))
                .is_file());
        }
    }
    let table = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.contains("mu = 0.7"));
    for col in ["MFC", "FLAT", "PID", "Lateral deviation e_y"] {
        assert!(table.contains(col), "missing {col}");
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 6);
    // resolved config is embedded with every default filled in
    let scn = &report["config"]["scenarios"][0];
    assert_eq!(scn["fs_hz"], 200.0);
    assert_eq!(scn["vehicle"]["m_kg"], 1600.0);
    assert_eq!(
        report["config"]["grid"]["mu"],
        serde_json::json!([1.0, 0.7])
    );
    let csv = fs::read_to_string(out.join("tracklike_mfc.report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    // atomic writes leave no temporaries behind
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(
            name.ends_with(".csv") || name.ends_with(".json") || name.ends_with(".txt"),
            "{name}"
        );
    }
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["run", "--config", "absent.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.json"));
}

#[test]
fn parse_errors_cite_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("a.json"),
        r#"{"scenarios": [{"fs": 100.0}]}"#,
    )
    .unwrap();
    let o = lab(&["run", "--config", "a.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`fs`"), "{}", stderr(&o));

    fs::write(
        dir.path().join("b.json"),
        r#"{"scenarios": ["straight_mfc"], "paralel": 3}"#,
    )
    .unwrap();
    let o = lab(&["run", "--config", "b.json"], dir.path());
    assert!(stderr(&o).contains("paralel"), "{}", stderr(&o));

    let o = lab(
        &[
            "run",
            "--scenario",
            "straight_mfc",
            "--override",
            "fs_hz=-1",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fs_hz"), "{}", stderr(&o));

    let o = lab(
        &["run", "--scenario", "straight_mfc", "--override", "mu"],
        dir.path(),
    );
    assert!(stderr(&o).contains("key=value"));
}

#[test]
fn low_friction_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &[
            "run",
            "--scenario",
            "circle_mfc",
            "--override",
            "mu=0.3",
            "--out",
            "wet",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let wet = read_json(&dir.path().join("wet/report.json"));
    assert_eq!(wet["config"]["overrides"], serde_json::json!(["mu=0.3"]));
    assert_eq!(wet["config"]["scenarios"][0]["mu"], 0.3);
    assert_eq!(wet["runs"][0]["verdict"]["verdict"], "completed");

    let o = lab(
        &["run", "--scenario", "circle_mfc", "--out", "dry"],
        dir.path(),
    );
    assert!(o.status.success());
    let dry = read_json(&dir.path().join("dry/report.json"));
    let psi = |r: &Value| r["runs"][0]["report"]["psi"]["linf"].as_f64().unwrap();
    assert!(
        psi(&wet) >= psi(&dry),
        "wet {} vs dry {}",
        psi(&wet),
        psi(&dry)
    );
}

#[test]
fn failed_runs_exit_nonzero_with_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &[
            "run",
            "--scenario",
            "straight_mfc",
            "--override",
            "corridor_m=0.1",
            "--override",
            "initial_offset_m=1.0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("off-corridor"), "{}", stdout(&o));
}

#[test]
fn estimator_validation() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["validate-estimators", "--out", "v200.json"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(text.matches("PASS").count(), 4);

    let o = lab(
        &[
            "validate-estimators",
            "--fs-hz",
            "400",
            "--out",
            "v400.json",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let errors = |name: &str| -> Vec<f64> {
        read_json(&dir.path().join(name))["checks"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["tolerance"].is_null())
            .map(|c| c["error"].as_f64().unwrap())
            .collect()
    };
    let (coarse, fine) = (errors("v200.json"), errors("v400.json"));
    assert_eq!(coarse.len(), 2);
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(f < c, "{c} -> {f}");
    }

    let o = lab(&["validate-estimators", "--tau-s", "0.005"], dir.path());
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("at least 2 sample periods"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn plotdata_round_trips_run_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &[
            "run",
            "--scenario",
            "lane_change_mfc",
            "--override",
            "duration_s=6",
            "--out",
            "r",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = "r/lane_change_mfc.trace.csv";
    let rows = fs::read_to_string(dir.path().join(trace))
        .unwrap()
        .lines()
        .count()
        - 1;

    let o = lab(
        &["plotdata", trace, "--channels", "e_y,e_psi", "--out", "two"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(dir.path().join("two"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["e_psi.csv", "e_y.csv"]);
    let e_y = fs::read_to_string(dir.path().join("two/e_y.csv")).unwrap();
    assert_eq!(e_y.lines().next(), Some("t,value,reference"));
    assert_eq!(e_y.lines().count() - 1, rows);

    let o = lab(&["plotdata", trace, "--out", "all"], dir.path());
    assert!(o.status.success());
    for ch in ["torque", "steer", "vx", "f1", "f2"] {
        assert!(dir.path().join(format!("all/{ch}.csv")).is_file(), "{ch}");
    }

    let o = lab(&["plotdata", trace, "--channels", "yaw"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("available: e_y"), "{}", stderr(&o));
}

#[test]
fn compare_subset() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &[
            "compare",
            "--scenario",
            "straight_mfc",
            "--mu",
            "1,0.5",
            "--controllers",
            "mfc,pid",
            "--jobs",
            "1",
            "--out",
            "cmp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&dir.path().join("cmp/report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 4);
    assert!(stdout(&o).contains("mu = 0.5"));
}

#[test]
fn list_scenarios_names_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["list-scenarios"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 15);
    assert!(text.contains("circle_mfc"));
    let o = lab(&["list-scenarios", "--json"], dir.path());
    let first: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(first["name"], "tracklike_mfc");
}
