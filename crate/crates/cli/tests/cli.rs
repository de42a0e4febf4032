use std::path::Path;
use std::process::Command;

use tempo_guard::bench::{BenchmarkResult, Label};
use tempo_guard::commands::{cmd_benchmark, cmd_gen, detect_sequence, sidecar_path, GenSource};
use tempo_guard::config::RunConfig;
use tempo_guard_core::attacksim::{
    generate_scene, inject, AttackKind, AttackSpec, ObjectTemplate, Placement, Pose, SceneObject, SceneSpec,
    SensorSpec,
};
use tempo_guard_core::detector::Decision;
use tempo_guard_core::io::save_frames;
use tempo_guard_core::{Frame, Point3};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tempo-guard"));
    c.env_remove("TEMPO_GUARD_SEED");
    c
}

fn static_scene() -> Vec<Frame> {
    let spec = SceneSpec {
        objects: vec![SceneObject {
            template: ObjectTemplate::CAR,
            pose: Pose::new(12.0, -3.0, 0.4),
            velocity: Point3::ZERO,
            points_per_frame: 120,
        }],
        ..SceneSpec::default()
    };
    generate_scene(&spec).unwrap().0
}

fn spoofed_last(mut frames: Vec<Frame>) -> Vec<Frame> {
    let last = frames.pop().unwrap();
    let attack = AttackSpec {
        kind: AttackKind::Dense,
        template: ObjectTemplate::PEDESTRIAN,
        point_count: 200,
        placement: Placement::Pose(Pose::new(11.0, 1.0, 0.09)),
        target_frame: last.index,
        azimuth_window_deg: Some(8.0),
    };
    frames.push(inject(&last, &attack, &SensorSpec::default(), 7, None).unwrap().frame);
    frames
}

fn run_detect(frames: &[Frame], dir: &Path) -> (i32, Vec<serde_json::Value>) {
    let path = dir.join("frames.tgpc");
    let out = dir.join("reports.jsonl");
    save_frames(frames, &path).unwrap();
    let status = bin()
        .args(["detect", "--history", "10", "--frames"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    let reports = std::fs::read_to_string(&out)
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (status.code().unwrap(), reports)
}

#[test]
fn detect_benign_static_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let (code, reports) = run_detect(&static_scene(), dir.path());
    assert_eq!(code, 0);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["decision"], "BENIGN");
    assert_eq!(reports[0]["anomaly_score"], 0.0);
    assert_eq!(reports[0]["frame_index"], 10);
}

#[test]
fn detect_spoofed_last_frame() {
    let dir = tempfile::tempdir().unwrap();
    let (code, reports) = run_detect(&spoofed_last(static_scene()), dir.path());
    assert_eq!(code, 2);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["decision"], "ATTACKED");
    assert!(reports[0]["residual_cluster_count"].as_u64().unwrap() >= 1);
}

#[test]
fn detect_needs_more_than_l_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (code, reports) = run_detect(&static_scene()[..5], dir.path());
    assert_eq!(code, 1);
    assert!(reports.is_empty());
}

#[test]
fn io_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tgpc");
    std::fs::write(&bad, b"nope").unwrap();
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    assert_eq!(code(&["detect", "--frames", bad.to_str().unwrap()]), 3);
    assert_eq!(code(&["detect", "--frames", "/definitely/missing.tgpc"]), 1);
    assert_eq!(code(&["detect"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["benchmark", "--jobs", "0"]), 1);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "jobs = \"many\"").unwrap();
    assert_eq!(code(&["benchmark", "--config", cfg.to_str().unwrap()]), 1);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    let args = ["gen", "--out", unwritable.to_str().unwrap()];
    assert_eq!(code(&args), 3);
}

#[test]
fn seed_comes_from_environment_unless_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["gen", "--kind", "dense", "--out"]).arg(&out);
        if let Some(e) = env {
            c.env("TEMPO_GUARD_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.status().unwrap().success());
        std::fs::read(&out).unwrap()
    };
    let env5 = gen(Some("5"), None, "a");
    let flag5 = gen(None, Some("5"), "b");
    let default = gen(None, None, "c");
    let both = gen(Some("9"), Some("5"), "d");
    assert_eq!(env5, flag5);
    assert_eq!(both, flag5);
    assert_ne!(default, env5);
}

#[test]
fn gen_writes_frames_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case.tgpc");
    let mut c = RunConfig::default();
    c.out = Some(out.clone());
    c.seed = 2;
    let frames = cmd_gen(&c, GenSource::Benchmark { kind: AttackKind::Sparse, poisoned: true }).unwrap();
    let back = tempo_guard_core::io::load_frames(&out).unwrap();
    assert_eq!(back, frames);
    let truth: serde_json::Value = serde_json::from_reader(std::fs::File::open(sidecar_path(&out)).unwrap()).unwrap();
    assert_eq!(truth["attack"]["injected"].as_array().unwrap().len(), 64);
    assert_eq!(truth["truth"]["frames"].as_array().unwrap().len(), frames.len());

    let mut c = RunConfig::from_toml("[gen.scene]\nduration_frames = 4\nnoise_sigma = 0.0\n").unwrap();
    c.out = Some(out.clone());
    let frames = cmd_gen(&c, GenSource::Scene).unwrap();
    assert_eq!(frames.len(), 4);
}

#[test]
fn detect_sequence_slides_over_every_frame() {
    let frames = generate_scene(&SceneSpec {
        duration_frames: 13,
        ..SceneSpec::default()
    })
    .unwrap()
    .0;
    let c = RunConfig::from_toml("[synthesis]\ncapacity = 10\n").unwrap();
    let reports = detect_sequence(&frames, &c).unwrap();
    assert_eq!(reports.iter().map(|r| r.frame_index).collect::<Vec<_>>(), vec![10, 11, 12]);
    assert!(reports.iter().all(|r| r.decision == Decision::Benign));
}

fn small_suite(jobs: usize, out: &Path) -> (BenchmarkResult, String) {
    let mut c = RunConfig::from_toml("[suite]\nscenarios = 4\n").unwrap();
    c.jobs = jobs;
    c.seed = 20;
    c.out = Some(out.to_path_buf());
    let r = cmd_benchmark(&c).unwrap();
    (r, std::fs::read_to_string(out).unwrap())
}

fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn benchmark_csv_contract_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (r1, csv1) = small_suite(1, &dir.path().join("a.csv"));
    let (_, csv2) = small_suite(3, &dir.path().join("b.csv"));
    assert_eq!(strip_wall(&csv1), strip_wall(&csv2));
    let mut lines = csv1.lines();
    assert_eq!(lines.next().unwrap(), "scenario,label,score,decision,wall_ms");
    assert_eq!(lines.count(), 8);
    assert_eq!(r1.rows[0].scenario, "0020-CAR");
    assert_eq!(r1.rows[0].label, Label::Benign);
    assert_eq!(r1.rows[1].label, Label::Poisoned);
    // aggregates recomputed from rows
    let fp = r1.rows.iter().filter(|r| r.label == Label::Benign && r.decision == Decision::Attacked).count();
    let tp = r1.rows.iter().filter(|r| r.label == Label::Poisoned && r.decision == Decision::Attacked).count();
    assert_eq!(r1.overall.fpr(), Some(fp as f64 / 4.0));
    assert_eq!(r1.overall.tpr(), Some(tp as f64 / 4.0));
}

#[test]
fn all_benign_suite_has_undefined_tpr() {
    let rows: Vec<_> = (0..4)
        .map(|k| tempo_guard::bench::Row {
            scenario: format!("{k:04}-STATIC"),
            label: Label::Benign,
            score: 0.0,
            decision: Decision::Benign,
            wall_ms: 1.0,
        })
        .collect();
    let c = tempo_guard::bench::Confusion::from_pairs(rows.iter().map(|r| (r.label, r.decision)));
    assert_eq!(c.fpr(), Some(0.0));
    assert_eq!(tempo_guard::bench::fmt_rate(c.tpr()), "");
}
