use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("sim runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// The ten-cost preset with a short horizon.
fn short_preset(dir: &Path, name: &str, t_final: f64) -> PathBuf {
    let o = sim(&["preset", name, "--emit"], dir);
    assert_eq!(code(&o), 0);
    let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
    v["t_final"] = t_final.into();
    write(dir, &format!("{name}.json"), &v.to_string())
}

const PAIR: &str = r#"{
    "graph": "k2",
    "costs": [{"kind": "squared", "center": 4}, {"kind": "squared", "center": -2}],
    "alpha": 1, "beta": 3,
    "x0": [-3, 5],
    "t_final": 5
}"#;

#[test]
fn run_writes_trace_events_and_summary() {
    let tmp = TempDir::new().unwrap();
    let scen = short_preset(tmp.path(), "fig5", 2.0);
    let o = sim(&["run", scen.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let trace = fs::read_to_string(tmp.path().join("o/trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("t,agent,x,v,err,event"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!((first[0], first[1], first[5]), ("0", "1", "1"));
    // 2 s at h = 1e-4 with stride 100: 201 samples of 10 agents.
    assert_eq!(trace.lines().count(), 1 + 201 * 10);

    let events = fs::read_to_string(tmp.path().join("o/events.csv")).unwrap();
    assert!(events.starts_with("agent,t\n1,0\n"));
    let agents: Vec<usize> = events.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(agents.iter().all(|a| (1..=10).contains(a)));

    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scheme"], "distributed_event");
    assert_eq!(summary["final_errors"].as_array().unwrap().len(), 10);
    assert_eq!(summary["events"]["min_gap"].as_array().unwrap().len(), 10);
    assert!(summary["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["log_error"].as_array().unwrap().len(), 201);
    assert_eq!(summary["seed"], 2014);
}

#[test]
fn outputs_are_bit_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let scen = short_preset(tmp.path(), "fig3a", 3.0);
    let s = scen.to_str().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&sim(&["run", s, "--out", out, "--seed", "9"], tmp.path())), 0);
    }
    for f in ["trace.csv", "events.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let c = sim(&["run", s, "--out", "c", "--seed", "10"], tmp.path());
    assert_eq!(code(&c), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/trace.csv")).unwrap(),
        fs::read(tmp.path().join("c/trace.csv")).unwrap()
    );
}

#[test]
fn jobs_fan_out_matches_sequential() {
    let tmp = TempDir::new().unwrap();
    let a = short_preset(tmp.path(), "fig1b", 2.0);
    let b = short_preset(tmp.path(), "fig4a", 2.0);
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    assert_eq!(code(&sim(&["run", a, b, "--out", "par", "--jobs", "2"], tmp.path())), 0);
    assert_eq!(code(&sim(&["run", a, b, "--out", "seq", "--jobs", "1"], tmp.path())), 0);
    for name in ["fig1b", "fig4a"] {
        assert_eq!(
            fs::read(tmp.path().join("par").join(name).join("trace.csv")).unwrap(),
            fs::read(tmp.path().join("seq").join(name).join("trace.csv")).unwrap()
        );
    }
}

#[test]
fn validation_errors_exit_2_and_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let bad_v = write(tmp.path(), "v.json", &PAIR.replace(r#""x0": [-3, 5]"#, r#""x0": [-3, 5], "v0": [1, 0]"#));
    let o = sim(&["run", bad_v.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("v0"), "{}", stderr(&o));

    let bad_delta = write(tmp.path(), "d.json", &PAIR.replace(r#""t_final": 5"#, r#""t_final": 5, "scheme": {"kind": "periodic", "delta": -1}"#));
    let o = sim(&["run", bad_delta.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("scheme.delta"));

    let malformed = write(tmp.path(), "m.json", "{\n  \"graph\": \"k2\",\n  \"costs\": [\n");
    let o = sim(&["run", malformed.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("m.json:"), "{}", stderr(&o));
}

#[test]
fn blowup_exits_3_with_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let o = sim(&["preset", "fig4b", "--emit"], tmp.path());
    let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
    v["x0"] = serde_json::json!({"uniform": [30.0, 40.0]});
    let p = write(tmp.path(), "euler.json", &v.to_string());
    let o = sim(&["run", p.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/summary.json")).unwrap()).unwrap();
    assert!(summary["blowup_t"].as_f64().is_some());
    assert!(fs::read_to_string(tmp.path().join("o/trace.csv")).unwrap().lines().count() > 1);
}

#[test]
fn certify_reports_named_fields() {
    let tmp = TempDir::new().unwrap();
    let p = write(tmp.path(), "pair.json", PAIR);
    let o = sim(&["certify", p.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["gamma", "gamma_prime", "phi", "zeta", "kappa", "tau", "eta", "lamF_min", "lamF_max", "lamE_max", "suggested_delta", "suggested_beta"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    // K2, phi = 9, alpha = 1, beta = 3, m = M = 2.
    assert!((r["gamma"].as_f64().unwrap() - 90.0).abs() < 1e-9);
    assert!((r["suggested_delta"].as_f64().unwrap() - 0.9 * r["tau"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(r["feasible"]["digraph_continuous"], true);
}

#[test]
fn certify_needs_a_box_for_locally_lipschitz_costs() {
    let tmp = TempDir::new().unwrap();
    let p = write(tmp.path(), "f8.json", r#"{"graph": "k2", "costs": ["f8", "f2"], "alpha": 1, "beta": 1, "t_final": 1}"#);
    let o = sim(&["certify", p.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("box"), "{}", stderr(&o));

    let boxed = write(tmp.path(), "f8b.json", r#"{"graph": "k2", "costs": ["f8", "f2"], "alpha": 1, "beta": 1, "t_final": 1, "analysis": {"box": [-1, 1]}}"#);
    let o = sim(&["certify", boxed.to_str().unwrap()], tmp.path());
    assert!(code(&o) == 0 || code(&o) == 4, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["constants_estimated"], true);
}

#[test]
fn certify_exits_4_when_the_scheme_is_not_covered() {
    let tmp = TempDir::new().unwrap();
    // Directed 3-cycle with a small beta: gamma < 0.
    let p = write(
        tmp.path(),
        "dc.json",
        r#"{"graph": "dcycle3", "costs": [{"kind":"squared","center":1},{"kind":"squared","center":2},{"kind":"squared","center":3}],
            "alpha": 1, "beta": 0.1, "t_final": 1}"#,
    );
    let o = sim(&["certify", p.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["feasible"]["digraph_continuous"], false);
}

#[test]
fn preset_emit_round_trips_and_runs() {
    let tmp = TempDir::new().unwrap();
    for name in ["fig1a", "fig1b", "fig1c", "fig3a", "fig3b", "fig4a", "fig4b", "fig5"] {
        let o = sim(&["preset", name, "--emit"], tmp.path());
        assert_eq!(code(&o), 0);
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["name"], name);
    }
    assert_eq!(code(&sim(&["preset", "fig9", "--emit"], tmp.path())), 2);
    let o = sim(&["preset", "fig4b", "--out", "p"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("p/summary.json").exists());
}

#[test]
fn graph_check_reports_and_flags() {
    let tmp = TempDir::new().unwrap();
    let good = write(tmp.path(), "g.txt", "n 3\n# directed cycle\n1 2 1\n2 3 1\n3 1 1\n");
    let o = sim(&["graph", "check", good.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["n"], 3);
    assert_eq!(r["weight_balanced"], true);
    assert!((r["lambda_hat_2"].as_f64().unwrap() - 1.5).abs() < 1e-12);

    let unbalanced = write(tmp.path(), "u.txt", "n 3\n1 2 1\n2 3 1\n");
    assert_eq!(code(&sim(&["graph", "check", unbalanced.to_str().unwrap()], tmp.path())), 2);
    let garbage = write(tmp.path(), "x.txt", "n 3\n1 2\n");
    assert_eq!(code(&sim(&["graph", "check", garbage.to_str().unwrap()], tmp.path())), 2);
}

#[test]
fn scenario_can_reference_a_graph_file_next_to_it() {
    let tmp = TempDir::new().unwrap();
    let sub = tmp.path().join("cfg");
    fs::create_dir(&sub).unwrap();
    write(&sub, "ring.txt", "n 3\n1 2 1\n2 1 1\n2 3 1\n3 2 1\n1 3 1\n3 1 1\n");
    let p = write(
        &sub,
        "s.json",
        r#"{"graph": "ring.txt", "costs": ["f2", "f10", "f2"], "alpha": 1, "beta": 1, "t_final": 1}"#,
    );
    let o = sim(&["run", p.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
