//! Sub-command bodies. Each returns the process exit code on success.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempo_guard_core::attacksim::{benchmark_scenario, generate_scene, inject, AttackKind, GroundTruth, Injection};
use tempo_guard_core::detector::{detect, Decision, DetectionReport};
use tempo_guard_core::io::{load_frames, save_frames};
use tempo_guard_core::synthesis::HistoryBuffer;
use tempo_guard_core::{Frame, PointCloud};

use crate::bench::{
    ablation_row, run_suite, sweep, sweep_argmin, write_ablation_csv, write_sweep_csv, AblationRow,
    BenchmarkResult, SuiteSpec, SweepRow,
};
use crate::config::RunConfig;
use crate::error::{usage, CliError, Result};

pub const EXIT_BENIGN: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ATTACK: i32 = 2;
pub const EXIT_IO: i32 = 3;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Slides the buffer over a frame sequence, one report per frame after the
/// first `L`. Flagged points are removed before a frame enters the history.
pub fn detect_sequence(frames: &[Frame], config: &RunConfig) -> Result<Vec<DetectionReport>> {
    let (synthesis, detector) = config.resolved();
    let l = synthesis.capacity;
    if frames.len() < l + 1 {
        return usage(format!(
            "need at least {} frames for history length {l}, got {}",
            l + 1,
            frames.len()
        ));
    }
    let mut buffer = HistoryBuffer::from_frames(&frames[..l], synthesis)?;
    let mut reports = Vec::with_capacity(frames.len() - l);
    for frame in &frames[l..] {
        let report = detect(&buffer, frame, &detector)?;
        if report.decision == Decision::Attacked {
            buffer.advance(&without_points(frame, &report.flagged_points()))?;
        } else {
            buffer.advance(frame)?;
        }
        reports.push(report);
    }
    Ok(reports)
}

/// `frame` minus the ascending raw indices in `drop`.
fn without_points(frame: &Frame, drop: &[usize]) -> Frame {
    let keep: PointCloud = frame
        .cloud
        .iter()
        .enumerate()
        .filter(|(i, _)| drop.binary_search(i).is_err())
        .map(|(_, p)| *p)
        .collect();
    Frame::new(frame.index, frame.timestamp, keep)
}

pub fn cmd_detect(config: &RunConfig) -> Result<i32> {
    config.validate()?;
    let Some(path) = &config.frames else {
        return usage("detect needs --frames");
    };
    let frames = load_frames(path)?;
    let reports = detect_sequence(&frames, config)?;
    let mut out = output(config.out.as_deref())?;
    for r in &reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let attacked = reports.iter().any(|r| r.decision == Decision::Attacked);
    Ok(if attacked { EXIT_ATTACK } else { EXIT_BENIGN })
}

pub fn suite_spec(config: &RunConfig, retain: bool) -> SuiteSpec {
    let (synthesis, detector) = config.resolved();
    SuiteSpec {
        kind: config.suite.kind,
        first_seed: config.seed,
        scenarios: config.suite.scenarios,
        synthesis,
        detector,
        jobs: config.jobs,
        retain,
    }
}

/// Runs the suite and writes `scenario,label,score,decision,wall_ms`.
pub fn cmd_benchmark(config: &RunConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let outcomes = run_suite(&suite_spec(config, false))?;
    let result = BenchmarkResult::from_outcomes(&outcomes);
    result.write_csv(output(config.out.as_deref())?)?;
    eprint!("{}", result.summary());
    Ok(result)
}

/// Runs the suite once and re-clusters its residuals at every grid point.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let grid = config.sweep.points()?;
    let spec = suite_spec(config, true);
    let outcomes = run_suite(&spec)?;
    let rows = sweep(&outcomes, &grid, &spec.detector, config.jobs)?;
    write_sweep_csv(&rows, output(config.out.as_deref())?)?;
    if let Some(best) = sweep_argmin(&rows) {
        eprintln!(
            "closest to ideal: min_pts={} eps={}",
            best.params.min_pts, best.params.eps
        );
    }
    Ok(rows)
}

/// Runs the suite once per coherence weight.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    if config.ablate.betas.is_empty() {
        return usage("ablation needs at least one beta");
    }
    let mut rows = Vec::new();
    for &beta in &config.ablate.betas {
        let mut spec = suite_spec(config, false);
        spec.synthesis.sfe.beta = beta;
        spec.synthesis.validate()?;
        rows.push(ablation_row(beta, &run_suite(&spec)?));
    }
    write_ablation_csv(&rows, output(config.out.as_deref())?)?;
    Ok(rows)
}

/// Ground-truth sidecar written next to generated frames.
#[derive(Debug, Serialize)]
pub struct Sidecar {
    pub truth: GroundTruth,
    /// Present when a frame was spoofed.
    pub attack: Option<SidecarAttack>,
}

#[derive(Debug, Serialize)]
pub struct SidecarAttack {
    pub frame: u32,
    pub kind: AttackKind,
    pub injected: Vec<usize>,
}

impl SidecarAttack {
    fn new(kind: AttackKind, inj: &Injection) -> Self {
        Self {
            frame: inj.frame.index,
            kind,
            injected: inj.injected.clone(),
        }
    }
}

pub fn sidecar_path(frames: &Path) -> PathBuf {
    let mut s = frames.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

/// What `gen` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenSource {
    /// The `[gen]` scene of the config, spoofed if it has an attack.
    Scene,
    /// A benchmark case; its last frame spoofed when `poisoned`.
    Benchmark { kind: AttackKind, poisoned: bool },
}

/// Writes frames and their sidecar; returns the frames.
pub fn cmd_gen(config: &RunConfig, source: GenSource) -> Result<Vec<Frame>> {
    config.validate()?;
    let Some(out) = &config.out else {
        return usage("gen needs --out");
    };
    let (frames, sidecar) = match source {
        GenSource::Scene => {
            let (mut frames, truth) = generate_scene(&config.gen.scene)?;
            let mut attack = None;
            if let Some(spec) = &config.gen.attack {
                let pos = frames
                    .iter()
                    .position(|f| f.index == spec.target_frame)
                    .ok_or_else(|| CliError::Usage(format!("no frame {} to attack", spec.target_frame)))?;
                let inj = inject(&frames[pos], spec, &config.gen.scene.sensor, config.seed, Some(&truth))?;
                attack = Some(SidecarAttack::new(spec.kind, &inj));
                frames[pos] = inj.frame;
            }
            (frames, Sidecar { truth, attack })
        }
        GenSource::Benchmark { kind, poisoned } => {
            let sc = benchmark_scenario(config.seed, kind)?;
            let mut frames = sc.frames.clone();
            let mut attack = None;
            if poisoned {
                attack = Some(SidecarAttack::new(kind, &sc.poisoned));
                *frames.last_mut().unwrap() = sc.poisoned.frame.clone();
            }
            (frames, Sidecar { truth: sc.truth, attack })
        }
    };
    save_frames(&frames, out)?;
    let mut w = BufWriter::new(File::create(sidecar_path(out))?);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.flush()?;
    Ok(frames)
}
