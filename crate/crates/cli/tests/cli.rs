use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contactkit_cli::{checklist, run, run_to_dir, trajectory, RunConfig, Suite};

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn contactkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contactkit")).args(args).output().unwrap()
}

fn run_config(json: &str) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json);
    let out = dir.path().join("out");
    let output = contactkit(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (output, dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn checklist_matches_golden() {
    let golden: BTreeMap<String, Vec<String>> = serde_json::from_str(include_str!("golden/checklist.json")).unwrap();
    let mut ours: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in checklist() {
        ours.entry(c.suite.name().to_string()).or_default().push(c.id.to_string());
    }
    assert_eq!(ours, golden);
    assert_eq!(golden.len(), Suite::ALL.len());
}

#[test]
fn report_lists_every_identity_of_each_suite() {
    let config = RunConfig::parse(r#"{ "scenario": { "name": "cubic" }, "samples": 3, "flow_samples": 2 }"#).unwrap();
    let golden: BTreeMap<String, Vec<String>> = serde_json::from_str(include_str!("golden/checklist.json")).unwrap();
    let report = run(&config).unwrap();
    for suite in &report.suites {
        let ids: Vec<String> = suite.identities.iter().map(|e| e.id.clone()).collect();
        assert_eq!(ids, golden[&suite.name], "{}", suite.name);
        for e in &suite.identities {
            assert!(!e.quote.is_empty());
            if e.applicable {
                assert_eq!(e.evaluated + e.domain_failures + e.errors, e.samples, "{}", e.id);
            } else {
                assert_eq!((e.samples, e.coverage), (0, 0.0));
            }
        }
    }
}

#[test]
fn cubic_potential_is_reported_untestable_not_failed() {
    let config = RunConfig::parse(r#"{ "scenario": { "name": "cubic" }, "suites": ["sandwich"] }"#).unwrap();
    let report = run(&config).unwrap();
    let suite = &report.suites[0];
    assert!(suite.pass);
    assert!(suite.findings.iter().any(|f| f.kind == "untestable"));
    assert!(suite.identities.iter().all(|e| !e.applicable));
}

#[test]
fn zero_gamma_exits_with_config_error_naming_gamma() {
    let (o, _dir) = run_config(r#"{ "scenario": { "name": "dissipative", "gamma": 0.0 } }"#);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn malformed_configs_exit_3() {
    for json in [
        r#"{ "scenario": { "name": "linear-potential" }, "suites": ["nonsense"] }"#,
        r#"{ "scenario": { "name": "pendulum" } }"#,
        r#"{ "scenario": { "name": "harmonic", "potential": "cubic" } }"#,
        r#"{ "scenario": { "name": "harmonic" }, "samples": 0 }"#,
        r#"{ "scenario": { "name": "harmonic" }, "thresholds": { "no.such.identity": 1.0 } }"#,
        r#"{ "scenario": { "name": "harmonic" }, "unexpected": 1 }"#,
        "not json",
    ] {
        let (o, _dir) = run_config(json);
        assert_eq!(o.status.code(), Some(3), "{json}: {}", stderr(&o));
        assert!(stderr(&o).contains("configuration error"), "{json}");
    }
}

#[test]
fn missing_config_file_exits_3() {
    let o = contactkit(&["run", "/nonexistent/contactkit.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn harmonic_obstruction_is_a_finding_and_exits_0() {
    let (o, dir) = run_config(r#"{ "scenario": { "name": "harmonic" }, "suites": ["measure"] }"#);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let findings = report["suites"][0]["findings"].as_array().unwrap();
    assert!(findings.iter().any(|f| f["kind"] == "obstruction"));
    let not_applicable: Vec<&str> = report["suites"][0]["identities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["applicable"] == false)
        .map(|e| e["ref"].as_str().unwrap())
        .collect();
    assert_eq!(not_applicable, ["measure.sigma-residual", "measure.pushforward-closed", "measure.pushforward-numeric"]);
}

#[test]
fn tightened_threshold_exits_2() {
    let (o, dir) = run_config(
        r#"{ "scenario": { "name": "linear-potential" }, "suites": ["contact-identities"], "samples": 5,
             "thresholds": { "hamiltonian.energy": 1e-30 } }"#,
    );
    assert_eq!(o.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["pass"], false);
    let energy = report["suites"][0]["identities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["ref"] == "hamiltonian.energy")
        .unwrap()
        .clone();
    assert_eq!(energy["pass"], false);
    assert_eq!(energy["threshold"], 1e-30);
}

#[test]
fn seed_flag_changes_samples_and_config_seed_reproduces_them() {
    let json = r#"{ "scenario": { "name": "linear-potential" }, "suites": ["zeroset"], "samples": 4, "seed": 9 }"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json);
    let read = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(contactkit(&args).status.code(), Some(0));
        std::fs::read_to_string(out.join("report.json")).unwrap()
    };
    let plain = read("a", None);
    assert_eq!(plain, read("b", Some("9")));
    assert_ne!(plain, read("c", Some("10")));
}

/// `|p|^2/2 + V(q)` for the linear potential.
fn mechanical_energy(row: &[f64]) -> f64 {
    0.5 * (row[4] * row[4] + row[5] * row[5]) + row[2] + row[3]
}

fn parse_csv(text: &str) -> (Vec<Vec<f64>>, Vec<String>, String) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x0,x1,x2,x3,x4,status"));
    let mut rows = Vec::new();
    let mut status = Vec::new();
    let mut trailer = String::new();
    for line in lines {
        if line.starts_with('#') {
            trailer = line.to_string();
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        rows.push(fields[..6].iter().map(|f| f.parse().unwrap()).collect());
        status.push(fields[6].to_string());
    }
    (rows, status, trailer)
}

fn trajectory_csv(json: &str, x0: &str, t: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json);
    let out = dir.path().join("traj");
    let o = contactkit(&["trajectory", cfg.to_str().unwrap(), "--x0", x0, "--t", t, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::read_to_string(out.join("trajectory.csv")).unwrap()
}

#[test]
fn trajectory_dissipates_mechanical_energy() {
    let text = trajectory_csv(r#"{ "scenario": { "name": "linear-potential" } }"#, "0,0,0,1,-1", "5");
    let (rows, status, trailer) = parse_csv(&text);
    assert!(rows.len() > 10);
    assert!((rows.last().unwrap()[0] - 5.0).abs() < 1e-12);
    assert_eq!(status.last().unwrap(), "complete");
    assert!(status[..status.len() - 1].iter().all(|s| s == "ok"));
    for pair in rows.windows(2) {
        assert!(pair[1][0] > pair[0][0]);
        assert!(mechanical_energy(&pair[1]) <= mechanical_energy(&pair[0]) + 1e-12);
    }
    assert!(trailer.starts_with("# probe,h_rate_residual="));
}

#[test]
fn zero_time_trajectory_has_one_row() {
    let text = trajectory_csv(r#"{ "scenario": { "name": "harmonic" } }"#, "0.5,0.1,-0.2,0.3,0.4", "0");
    let (rows, status, _) = parse_csv(&text);
    assert_eq!(rows, vec![vec![0.0, 0.5, 0.1, -0.2, 0.3, 0.4]]);
    assert_eq!(status, ["complete"]);
}

#[test]
fn escaping_trajectory_is_truncated_not_an_error() {
    let text = trajectory_csv(
        r#"{ "scenario": { "name": "linear-potential", "half_width": 1.5 } }"#,
        "0,0,0,1,-1",
        "5",
    );
    let (rows, status, _) = parse_csv(&text);
    assert_eq!(status.last().unwrap(), "escaped");
    assert!(rows.last().unwrap()[0] < 5.0);
    assert!(rows.iter().all(|r| r[1..].iter().skip(1).all(|c| c.abs() <= 1.5)));
}

#[test]
fn trajectory_rejects_points_outside_the_chart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "scenario": { "name": "harmonic", "half_width": 1.0 } }"#);
    let o = contactkit(&["trajectory", cfg.to_str().unwrap(), "--x0", "0,2,0,0,0", "--t", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_configured_trajectories() {
    let config = RunConfig::parse(
        r#"{ "scenario": { "name": "linear-potential" }, "suites": ["sampler"], "samples": 3, "flow_samples": 2,
             "output": { "report": "r.json" },
             "trajectories": [ { "name": "orbit", "x0": [0, 0.2, 0.1, 0.5, 0.5], "t": 1.0 } ] }"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_to_dir(&config, dir.path()).unwrap();
    assert!(report.pass);
    assert!(dir.path().join("r.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    let (outcome, trailer) = trajectory::integrate(&config, &[0.0, 0.2, 0.1, 0.5, 0.5], 1.0).unwrap();
    assert_eq!(csv, trajectory::to_csv(&outcome, &trailer));
}

#[test]
fn integrator_blocks_parse_and_reject_unknown_fields() {
    use contactkit::dynamics::Method;
    let parse = |integrator: &str| {
        RunConfig::parse(&format!(r#"{{ "scenario": {{ "name": "harmonic" }}, "integrator": {integrator} }}"#))
    };
    let rk4 = parse(r#"{ "method": "rk4", "step": 0.01 }"#).unwrap();
    assert_eq!(rk4.integrator.method, Method::Rk4 { step: 0.01 });
    assert_eq!(rk4.integrator.fd_step, 1e-5);
    let rk45 = parse(r#"{ "method": "rk45", "rtol": 1e-9, "atol": 1e-11, "fd_step": 1e-4 }"#).unwrap();
    assert_eq!(rk45.integrator.method, Method::Rk45 { rtol: 1e-9, atol: 1e-11 });
    assert_eq!(rk45.flow_options().fd_step, 1e-4);
    assert!(parse(r#"{ "method": "rk4", "step": 0.01, "rtol": 1.0 }"#).is_err());
    assert!(parse(r#"{ "method": "euler", "step": 0.01 }"#).is_err());
    assert!(parse(r#"{ "method": "rk4", "step": -1.0 }"#).is_err());
    let round = serde_json::to_string(&rk45).unwrap();
    assert_eq!(RunConfig::parse(&round).unwrap(), rk45);
}

#[test]
fn readme_example_config_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```json\n").unwrap() + "```json\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let config = RunConfig::parse(&readme[start..end]).unwrap();
    assert_eq!(config.suites.len(), Suite::ALL.len());
    assert_eq!(config.trajectories.len(), 1);
}
