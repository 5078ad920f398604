use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vista_core::cloud::decode_cloud;
use vista_core::episode::{rollout_metrics, EpisodeConfig, Env, LateralFeedbackPolicy, RolloutMetrics, SimContext};
use vista_core::event::EventArray;
use vista_core::trace::load_trace;

fn vista(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vista")).args(args).output().expect("vista runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let trace = dir.join("trace");
    let mut args = vec!["synth-trace", "--out", trace.to_str().unwrap(), "--length", "120"];
    args.extend_from_slice(extra);
    ok(&vista(&args));
    trace
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_trace_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = synth(tmp.path(), &["--no-lidar"]);
    let out = ok(&vista(&["validate-trace", "--trace", s(&trace)]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["streams"][0]["name"], "rgb");

    // Missing --trace is a usage error.
    let out = vista(&["validate-trace"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--trace"));

    assert_eq!(vista(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(vista(&[]).status.code(), Some(2));

    // Break the odometry time ordering: a validation failure.
    let odom = trace.join("odometry.csv");
    let text = std::fs::read_to_string(&odom).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(2, 3);
    std::fs::write(&odom, lines.join("\n") + "\n").unwrap();
    let out = vista(&["validate-trace", "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(1));

    let missing = tmp.path().join("nowhere");
    assert_eq!(vista(&["validate-trace", "--trace", s(&missing)]).status.code(), Some(1));
}

#[test]
fn gen_dataset_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = synth(tmp.path(), &["--no-lidar", "--profile", "sine", "--amplitude", "0.03"]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&vista(&["gen-dataset", "--trace", s(&trace), "--out", s(out), "--n", "100", "--seed", "7"]));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 102);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn resynthesis_commands_write_payloads() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = synth(tmp.path(), &[]);
    let loaded = load_trace(&trace).unwrap();

    let cloud = tmp.path().join("cloud.bin");
    let polar = tmp.path().join("polar.bin");
    ok(&vista(&[
        "lidar-resynth", "--trace", s(&trace), "--frame", "3", "--dy", "1.0", "--dyaw", "-0.05",
        "--out", s(&cloud), "--debug-polar", s(&polar),
    ]));
    let pts = decode_cloud(&std::fs::read(&cloud).unwrap()).unwrap();
    assert!(pts.len() > 1000);
    assert_eq!(std::fs::read(&polar).unwrap().len(), 16 + 2 * 4 * 32 * 512);

    let rgb = tmp.path().join("rgb.bin");
    ok(&vista(&["rgb-resynth", "--trace", s(&trace), "--frame", "5", "--dy", "0.5", "--camera-height", "1.5", "--out", s(&rgb)]));
    assert_eq!(std::fs::read(&rgb).unwrap().len(), 128 * 96 * 3);

    let depth = tmp.path().join("depth.bin");
    let d: Vec<u8> = (0..128 * 96).flat_map(|_| 10.0f32.to_le_bytes()).collect();
    std::fs::write(&depth, d).unwrap();
    ok(&vista(&["rgb-resynth", "--trace", s(&trace), "--frame", "5", "--dx", "1", "--depth", s(&depth), "--out", s(&rgb)]));

    let ev = tmp.path().join("events.bin");
    for space in ["event", "rgb"] {
        ok(&vista(&[
            "event-synth", "--trace", s(&trace), "--frames", "4", "5", "--space", space, "--mu-c", "0.15",
            "--sigma-c", "0", "--out", s(&ev),
        ]));
        let events = EventArray::decode(&std::fs::read(&ev).unwrap()).unwrap();
        assert!(!events.is_empty(), "{space} space produced no events");
    }
    assert!(loaded.streams.iter().any(|s| s.name == "lidar"));

    // Out-of-range frame is a plain failure, not a usage error.
    assert_eq!(vista(&["rgb-resynth", "--trace", s(&trace), "--frame", "100000", "--out", s(&rgb)]).status.code(), Some(1));
}

#[test]
fn rollout_through_policy_process_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = synth(tmp.path(), &["--no-lidar"]);
    let out = ok(&vista(&[
        "rollout", "--trace", s(&trace), "--policy-cmd", env!("CARGO_BIN_EXE_vista-policy-demo"),
        "--policy-arg=--trials", "--policy-arg=4", "--policy-arg=--seed", "--policy-arg=11",
    ]));
    let remote: RolloutMetrics = serde_json::from_str(out.trim()).unwrap();

    let ctx = SimContext::new(load_trace(&trace).unwrap()).unwrap();
    let mut env = Env::new(ctx, EpisodeConfig::default()).unwrap();
    let local = rollout_metrics(&mut env, &mut LateralFeedbackPolicy::default(), 4, 11).unwrap();
    assert_eq!(remote, local);
    assert_eq!(remote.trials, 4);
}
