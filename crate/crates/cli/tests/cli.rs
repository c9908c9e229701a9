use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graphmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphmp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn path_instance(dir: &Path) -> (String, String) {
    let graph = dir.join("path.txt");
    let attrs = dir.join("attrs.csv");
    fs::write(&graph, "100 101\n101 102\n102 103\n").unwrap();
    // raw features normalize to [0.1, 0.9, 0.9, 0.1] up to the margin
    fs::write(&attrs, "node,feature\n100,0.1\n101,0.9\n102,0.9\n103,0.1\n").unwrap();
    (graph.display().to_string(), attrs.display().to_string())
}

#[test]
fn detect_small_path_reports_original_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, attrs) = path_instance(dir.path());
    let out = graphmp(&["detect", "--graph", &graph, "--attrs", &attrs, "--stat", "ems", "--k", "2"]);
    let json = stdout_json(&out);
    assert_eq!(json["support"], serde_json::json!([101, 102]));
    // normalized features are [0, 0.999, 0.999, 0]
    let expected = (2.0f64 * 0.999).powi(2) / 2.0;
    assert!((json["score"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert_eq!(json["config"]["k"], 2);
    assert!(json["warning"].is_null());
    assert!(json["wall_time_ms"].is_number());
}

#[test]
fn k_above_node_count_is_clamped() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, attrs) = path_instance(dir.path());
    let out = graphmp(&["detect", "--graph", &graph, "--attrs", &attrs, "--k", "40"]);
    let json = stdout_json(&out);
    assert_eq!(json["config"]["k"], 4);
    assert!(json["warning"].as_str().unwrap().contains("clamped"));
}

#[test]
fn missing_attrs_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, _) = path_instance(dir.path());
    let missing = dir.path().join("absent.csv");
    let out = graphmp(&["detect", "--graph", &graph, "--attrs", missing.to_str().unwrap(), "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn malformed_graph_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, attrs) = path_instance(dir.path());
    let graph = dir.path().join("bad.txt");
    fs::write(&graph, "0 1\n1 x\n").unwrap();
    let out = graphmp(&["detect", "--graph", graph.to_str().unwrap(), "--attrs", &attrs, "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "parse");
}

#[test]
fn synth_then_detect_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let inst_str = inst.to_str().unwrap();
    let synth = ["synth", "--rows", "8", "--cols", "8", "--cluster", "6", "--flip", "4", "--seed", "9", "--out", inst_str];
    stdout_json(&graphmp(&synth));
    let first = fs::read(inst.join("attrs.csv")).unwrap();
    stdout_json(&graphmp(&synth));
    assert_eq!(first, fs::read(inst.join("attrs.csv")).unwrap());

    let graph = inst.join("graph.txt");
    let attrs = inst.join("attrs.csv");
    let detect = [
        "detect",
        "--graph",
        graph.to_str().unwrap(),
        "--attrs",
        attrs.to_str().unwrap(),
        "--stat",
        "ebp",
        "--k",
        "6",
        "--no-timing",
    ];
    let a = graphmp(&detect);
    let b = graphmp(&detect);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout_json(&a)["wall_time_ms"].is_null());
}

#[test]
fn bench_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = graphmp(&[
            "bench", "--rows", "8", "--cols", "8", "--cluster", "6", "--flip", "2,6", "--stat", "ems,ebp",
            "--repeats", "2", "--seed", "4", "--workers", workers, "--no-timing", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read_to_string(out).unwrap()
    };
    let serial = run("1", "a.csv");
    let parallel = run("4", "b.csv");
    assert_eq!(serial, parallel);
    let lines: Vec<&str> = serial.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[0].starts_with("method,statistic,mode,flip_rate,k,seed,status"));
}

#[test]
fn bench_records_failing_cells() {
    let out = graphmp(&[
        "bench", "--rows", "5", "--cols", "5", "--cluster", "4", "--mode", "gaussian", "--flip", "0",
        "--stat", "kulldorff", "--repeats", "1", "--no-timing",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",validation,"));
}

#[test]
fn verify_passes() {
    let out = graphmp(&["verify", "--per-graph", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
