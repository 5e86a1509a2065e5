use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn pipevid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipevid"))
        .args(args)
        .env_remove("PIPEVID_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_densenet_counts() {
    let arch = fixture("pardensenet.json");
    let o = pipevid(&["analyze", "--arch", path_str(&arch), "--subnets", "14", "--clocks", "halve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("26 labelled"), "{s}");
    assert!(s.contains("416 unclocked, 86 clocked"), "{s}");
    assert!(s.contains("theoretical speedup   4.84"), "{s}");
}

#[test]
fn analyze_inception_params() {
    let arch = fixture("parinception.json");
    let o = pipevid(&["analyze", "--arch", path_str(&arch), "--params"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("weights-only     12,501,056"), "{}", stdout(&o));
}

#[test]
fn missing_file_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = pipevid(&["analyze", "--arch", "/nonexistent/arch.json", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_2() {
    let arch = fixture("toy6.json");
    let a = path_str(&arch);
    assert_eq!(pipevid(&["simulate", "--arch", a, "--workers", "0"]).status.code(), Some(2));
    assert_eq!(pipevid(&["simulate", "--arch", a, "--clocks", "x,y"]).status.code(), Some(2));
    assert_eq!(pipevid(&["run", "--arch", a, "--subnets", "99"]).status.code(), Some(2));
    assert_eq!(pipevid(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulate_sweep_grid_has_twenty_rows() {
    let arch = fixture("pardensenet.json");
    let o = pipevid(&["simulate", "--arch", path_str(&arch), "--clocks", "halve", "--sweep", "--frames", "48"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "config,subnetworks,clocks,workers,throughput_factor,latency,info_latency");
    assert_eq!(lines.len(), 21);
}

#[test]
fn simulate_single_config_writes_row_and_trace() {
    let arch = fixture("toy6.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = pipevid(&[
        "simulate", "--arch", path_str(&arch), "--subnets", "3", "--workers", "2", "--frames", "10", "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    let events = trace["traceEvents"].as_array().unwrap();
    // One event per (subnetwork, frame) task.
    assert_eq!(events.iter().filter(|e| e["ph"] == "X").count(), 3 * 10);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn run_check_shift_passes_on_toy6() {
    let arch = fixture("toy6.json");
    let o = pipevid(&["run", "--arch", path_str(&arch), "--subnets", "2", "--check-shift", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("PASS") && s.contains("shift = 1"), "{s}");
}

#[test]
fn run_check_shift_fails_with_exit_1_under_clocks() {
    let arch = fixture("toy6.json");
    let o = pipevid(&[
        "run", "--arch", path_str(&arch), "--subnets", "2", "--clocks", "1,1,1,2,2,2", "--check-shift",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn existing_output_refused_and_replay_is_bitwise() {
    let arch = fixture("toy6.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let args = ["run", "--arch", path_str(&arch), "--subnets", "3", "--seed", "5", "--frames", "7", "--out", path_str(&out)];
    assert_eq!(pipevid(&args).status.code(), Some(0));
    let again = pipevid(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(again.stdout.is_empty());
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(pipevid(&forced).status.code(), Some(0));

    let copy = dir.path().join("replay");
    let manifest = out.join("manifest.json");
    let o = pipevid(&["replay", path_str(&manifest), "--out", path_str(&copy)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["outputs.bin", "result.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(copy.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_distill_records_both_components() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let o = pipevid(&[
        "train", "--task", "moving-dot", "--subnets", "4", "--distill", "--lambda", "1", "--steps", "4",
        "--batch", "2", "--eval-every", "2", "--eval-sequences", "2", "--lr", "0.005", "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,train_loss,eval_loss,task_loss,distill_loss"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[4] > 0.0);
        assert!((r[1] - (r[3] + r[4])).abs() < 1e-9 * r[1].abs().max(1.0));
    }
    assert!(out.join("teacher_loss.csv").exists());
    assert!(out.join("checkpoint/params.bin").exists());
}

#[test]
fn train_replay_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let copy = dir.path().join("b");
    let o = pipevid(&[
        "train", "--subnets", "2", "--steps", "3", "--batch", "2", "--eval-sequences", "2", "--seed", "11",
        "--out", path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = pipevid(&["replay", path_str(&out.join("manifest.json")), "--out", path_str(&copy)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["loss.csv", "summary.json", "checkpoint/params.bin", "checkpoint/manifest.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(copy.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bench_prints_both_runners() {
    let arch = fixture("toy6.json");
    let o = pipevid(&["bench", "--arch", path_str(&arch), "--subnets", "2", "--frames", "4", "--repeats", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("sequential,1,") && s.contains("pipelined,4,"), "{s}");
}
