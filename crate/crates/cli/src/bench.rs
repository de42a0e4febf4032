//! Seeded benchmark suites: paired clean/spoofed cases, scored in parallel.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tempo_guard_core::attacksim::{benchmark_scenario, AttackKind, TemplateKind};
use tempo_guard_core::detector::{
    prepare, score_merged, Decision, DetectionReport, DetectorConfig, MergedCloud, PreparedDetection,
};
use tempo_guard_core::sceneflow::within_cluster_variance;
use tempo_guard_core::synthesis::{HistoryBuffer, SynthesisConfig};
use tempo_guard_core::ClusterParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Poisoned,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Poisoned => "poisoned",
        })
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub scenario: String,
    pub label: Label,
    pub score: f64,
    pub decision: Decision,
    pub wall_ms: f64,
}

/// A checked frame kept around for re-scoring under other cluster settings.
#[derive(Debug, Clone)]
pub struct Retained {
    pub frame_index: u32,
    pub merged: MergedCloud,
    pub incoming_members: Vec<Vec<usize>>,
}

impl Retained {
    fn from_prepared(p: &PreparedDetection, drop_stale: bool) -> Self {
        Self {
            frame_index: p.frame_index,
            merged: p.merged(drop_stale),
            incoming_members: p.incoming_members.clone(),
        }
    }

    pub fn rescore(&self, config: &DetectorConfig) -> Result<DetectionReport> {
        Ok(score_merged(self.frame_index, &self.merged, &self.incoming_members, config)?)
    }
}

#[derive(Debug, Clone)]
pub struct LabeledCheck {
    pub label: Label,
    pub report: DetectionReport,
    pub wall_ms: f64,
    /// Per-point-normalized Chamfer distance between warped synthesis and frame.
    pub baseline_cd: f64,
    /// Mean squared deviation of the warp flow from its cluster mean.
    pub flow_variance: f64,
    pub retained: Option<Retained>,
}

/// Both checks of one seeded case.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub seed: u64,
    pub id: String,
    pub template: TemplateKind,
    pub benign: LabeledCheck,
    pub poisoned: LabeledCheck,
    /// Spoofed points the detector flagged, out of the injected count.
    pub injected_flagged: usize,
    pub injected_total: usize,
}

impl ScenarioOutcome {
    pub fn checks(&self) -> [&LabeledCheck; 2] {
        [&self.benign, &self.poisoned]
    }
}

#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub kind: AttackKind,
    pub first_seed: u64,
    pub scenarios: usize,
    pub synthesis: SynthesisConfig,
    pub detector: DetectorConfig,
    pub jobs: usize,
    /// Keep merged clouds for sweeps.
    pub retain: bool,
}

pub fn scenario_id(seed: u64, template: TemplateKind) -> String {
    format!("{seed:04}-{template}")
}

/// Runs one case: warms a buffer on the history, then checks the clean and
/// the spoofed last frame against it.
pub fn run_scenario(seed: u64, spec: &SuiteSpec) -> Result<ScenarioOutcome> {
    let sc = benchmark_scenario(seed, spec.kind)?;
    let buffer = HistoryBuffer::from_frames(sc.history(spec.synthesis.capacity), spec.synthesis)?;
    let check = |label: Label, frame| -> Result<LabeledCheck> {
        let t0 = Instant::now();
        let prepared = prepare(&buffer, frame)?;
        let report = prepared.report(&spec.detector)?;
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        let est = &prepared.warped.estimate;
        Ok(LabeledCheck {
            label,
            baseline_cd: prepared.baseline_cd()?,
            flow_variance: within_cluster_variance(&est.flow, &est.labeling)?,
            retained: spec
                .retain
                .then(|| Retained::from_prepared(&prepared, spec.detector.drop_stale)),
            report,
            wall_ms,
        })
    };
    let benign = check(Label::Benign, sc.incoming())?;
    let poisoned = check(Label::Poisoned, &sc.poisoned.frame)?;
    let flagged = poisoned.report.flagged_points();
    let injected_flagged = sc
        .poisoned
        .injected
        .iter()
        .filter(|i| flagged.binary_search(i).is_ok())
        .count();
    Ok(ScenarioOutcome {
        seed,
        id: scenario_id(seed, sc.template),
        template: sc.template,
        benign,
        poisoned,
        injected_flagged,
        injected_total: sc.poisoned.injected.len(),
    })
}

/// All cases of a suite, ordered by scenario id whatever the thread count.
pub fn run_suite(spec: &SuiteSpec) -> Result<Vec<ScenarioOutcome>> {
    spec.synthesis.validate()?;
    spec.detector.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let seeds: Vec<u64> = (0..spec.scenarios as u64).map(|i| spec.first_seed + i).collect();
    let mut out = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_scenario(s, spec))
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

pub fn rows(outcomes: &[ScenarioOutcome]) -> Vec<Row> {
    outcomes
        .iter()
        .flat_map(|o| {
            o.checks().map(|c| Row {
                scenario: o.id.clone(),
                label: c.label,
                score: c.report.anomaly_score,
                decision: c.report.decision,
                wall_ms: c.wall_ms,
            })
        })
        .collect()
}

/// Confusion counts; rates are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, label: Label, decision: Decision) {
        match (label, decision) {
            (Label::Poisoned, Decision::Attacked) => self.tp += 1,
            (Label::Poisoned, Decision::Benign) => self.fn_ += 1,
            (Label::Benign, Decision::Attacked) => self.fp += 1,
            (Label::Benign, Decision::Benign) => self.tn += 1,
        }
    }

    pub fn from_pairs(it: impl IntoIterator<Item = (Label, Decision)>) -> Self {
        let mut c = Self::default();
        for (l, d) in it {
            c.add(l, d);
        }
        c
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Mean of TPR and TNR; `None` unless both classes are present.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        Some((self.tpr()? + 1.0 - self.fpr()?) / 2.0)
    }

    /// Euclidean distance of (FPR, TPR) from the ideal corner (0, 1).
    pub fn distance_to_ideal(&self) -> Option<f64> {
        let f = self.fpr()?;
        let t = self.tpr()?;
        Some((f * f + (1.0 - t) * (1.0 - t)).sqrt())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Aggregates over the whole suite and per template class.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub rows: Vec<Row>,
    pub overall: Confusion,
    pub per_class: Vec<(TemplateKind, Confusion)>,
}

impl BenchmarkResult {
    pub fn from_outcomes(outcomes: &[ScenarioOutcome]) -> Self {
        let rows = rows(outcomes);
        let overall = Confusion::from_pairs(rows.iter().map(|r| (r.label, r.decision)));
        let mut per_class = Vec::new();
        for t in TemplateKind::ALL {
            let c = Confusion::from_pairs(
                outcomes
                    .iter()
                    .filter(|o| o.template == t)
                    .flat_map(|o| o.checks().map(|c| (c.label, c.report.decision))),
            );
            if c != Confusion::default() {
                per_class.push((t, c));
            }
        }
        Self {
            rows,
            overall,
            per_class,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Human-readable aggregate lines.
    pub fn summary(&self) -> String {
        let mut s = format!("all: {}\n", fmt_rates(&self.overall));
        for (t, c) in &self.per_class {
            s.push_str(&format!("{t}: {}\n", fmt_rates(c)));
        }
        s
    }
}

pub fn fmt_rate(r: Option<f64>) -> String {
    r.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn fmt_rates(c: &Confusion) -> String {
    format!(
        "fpr={} tpr={} (tp {} fn {} fp {} tn {})",
        fmt_rate(c.fpr()),
        fmt_rate(c.tpr()),
        c.tp,
        c.fn_,
        c.fp,
        c.tn
    )
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: ClusterParams,
    pub confusion: Confusion,
}

impl SweepRow {
    pub fn distance(&self) -> Option<f64> {
        self.confusion.distance_to_ideal()
    }
}

/// Re-scores retained frames at every grid point, threshold and score mode unchanged.
pub fn sweep(
    outcomes: &[ScenarioOutcome],
    grid: &[ClusterParams],
    base: &DetectorConfig,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let checks: Vec<&LabeledCheck> = outcomes.iter().flat_map(|o| o.checks()).collect();
    if checks.iter().any(|c| c.retained.is_none()) {
        return Err(CliError::Usage("sweep needs a suite run with retained clouds".into()));
    }
    grid.iter()
        .map(|&params| {
            let config = DetectorConfig {
                cluster_params: params,
                ..*base
            };
            let decisions = pool.install(|| {
                checks
                    .par_iter()
                    .map(|c| {
                        let r = c.retained.as_ref().unwrap().rescore(&config)?;
                        Ok((c.label, r.decision))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(SweepRow {
                params,
                confusion: Confusion::from_pairs(decisions),
            })
        })
        .collect()
}

/// Row with the smallest distance to ideal. Among equally distant rows the
/// one least prone to alarms wins: largest `min_pts`, then largest `eps`.
pub fn sweep_argmin(rows: &[SweepRow]) -> Option<&SweepRow> {
    let key = |r: &SweepRow| (r.params.min_pts, r.params.eps);
    let mut best: Option<(&SweepRow, f64)> = None;
    for r in rows {
        let Some(d) = r.distance() else { continue };
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && key(r) > key(b)),
        };
        if better {
            best = Some((r, d));
        }
    }
    best.map(|(r, _)| r)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["min_pts", "eps", "fpr", "tpr", "distance"])?;
    for r in rows {
        out.write_record([
            r.params.min_pts.to_string(),
            r.params.eps.to_string(),
            fmt_rate(r.confusion.fpr()),
            fmt_rate(r.confusion.tpr()),
            fmt_rate(r.distance()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One coherence weight of an ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub beta: f64,
    pub confusion: Confusion,
    /// Mean over spoofed frames of the within-cluster flow variance.
    pub mean_flow_variance: f64,
    /// Per-case variance on the spoofed frame, in scenario order.
    pub flow_variance: Vec<f64>,
}

pub fn ablation_row(beta: f64, outcomes: &[ScenarioOutcome]) -> AblationRow {
    let flow_variance: Vec<f64> = outcomes.iter().map(|o| o.poisoned.flow_variance).collect();
    let mean_flow_variance = if flow_variance.is_empty() {
        0.0
    } else {
        flow_variance.iter().sum::<f64>() / flow_variance.len() as f64
    };
    AblationRow {
        beta,
        confusion: BenchmarkResult::from_outcomes(outcomes).overall,
        mean_flow_variance,
        flow_variance,
    }
}

pub fn write_ablation_csv<W: std::io::Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["beta", "fpr", "tpr", "mean_flow_variance"])?;
    for r in rows {
        out.write_record([
            r.beta.to_string(),
            fmt_rate(r.confusion.fpr()),
            fmt_rate(r.confusion.tpr()),
            format!("{:.6e}", r.mean_flow_variance),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_follow_counts() {
        let (b, p) = (Label::Benign, Label::Poisoned);
        let (ok, hit) = (Decision::Benign, Decision::Attacked);
        let c = Confusion::from_pairs([(b, ok), (b, hit), (b, ok), (b, ok), (p, hit)]);
        assert_eq!(c.fpr(), Some(0.25));
        assert_eq!(c.tpr(), Some(1.0));
        assert_eq!(c.distance_to_ideal(), Some(0.25));
        let only_benign = Confusion::from_pairs([(b, ok); 4]);
        assert_eq!(only_benign.fpr(), Some(0.0));
        assert_eq!(only_benign.tpr(), None);
        assert_eq!(fmt_rate(only_benign.tpr()), "");
    }

    #[test]
    fn argmin_breaks_ties_toward_fewer_alarms() {
        let mk = |m, eps, fp, tn| SweepRow {
            params: ClusterParams { eps, min_pts: m },
            confusion: Confusion { tp: 1, fn_: 0, fp, tn },
        };
        let rows = [mk(9, 0.5, 0, 2), mk(13, 0.25, 0, 2), mk(13, 0.75, 0, 2), mk(17, 1.0, 1, 1)];
        let best = sweep_argmin(&rows).unwrap().params;
        assert_eq!((best.min_pts, best.eps), (13, 0.75));
    }
}
