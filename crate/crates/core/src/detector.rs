//! Residual-cluster test on a synthesis merged with the incoming frame.
//!
//! After warping, every genuine surface in the incoming frame should have
//! synthesis points mixed into its density clusters. A cluster made only of
//! incoming points has no history behind it and is reported as injected.

use serde::{Deserialize, Serialize};

use crate::cloud::{Frame, PointCloud};
use crate::clustering::{dbscan, ClusterParams};
use crate::error::{invalid, Result};
use crate::sceneflow::normalized_chamfer_distance;
use crate::synthesis::{warp_to_incoming, HistoryBuffer, Synthesis, WarpedSynthesis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Synthesis,
    Incoming,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedCloud {
    pub cloud: PointCloud,
    pub provenance: Vec<Provenance>,
}

impl MergedCloud {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Number of leading synthesis points.
    pub fn num_synthesis(&self) -> usize {
        self.provenance
            .iter()
            .take_while(|p| **p == Provenance::Synthesis)
            .count()
    }
}

/// Synthesis points first, then the incoming points, both in their original order.
pub fn merge(synthesis: &Synthesis, incoming: &PointCloud) -> MergedCloud {
    let mut cloud = PointCloud::with_capacity(synthesis.len() + incoming.len());
    cloud.extend_from(&synthesis.cloud);
    cloud.extend_from(incoming);
    let mut provenance = vec![Provenance::Synthesis; synthesis.len()];
    provenance.extend(std::iter::repeat_n(Provenance::Incoming, incoming.len()));
    MergedCloud { cloud, provenance }
}

/// DBSCAN clusters of `merged` made only of incoming points.
///
/// Each cluster lists merged-cloud indices in ascending order.
pub fn residual_clusters(merged: &MergedCloud, params: ClusterParams) -> Result<Vec<Vec<usize>>> {
    let labels = dbscan(&merged.cloud, params)?;
    Ok(labels
        .members()
        .into_iter()
        .filter(|c| c.iter().all(|&i| merged.provenance[i] == Provenance::Incoming))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Incoming points inside residual clusters.
    #[default]
    PointCount,
    /// Number of residual clusters.
    ClusterCount,
}

pub fn anomaly_score(residuals: &[Vec<usize>], mode: ScoreMode) -> f64 {
    match mode {
        ScoreMode::PointCount => residuals.iter().map(Vec::len).sum::<usize>() as f64,
        ScoreMode::ClusterCount => residuals.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Benign,
    Attacked,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Benign => "BENIGN",
            Decision::Attacked => "ATTACKED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub cluster_params: ClusterParams,
    /// Scores strictly above this are attacks.
    pub threshold: f64,
    pub score_mode: ScoreMode,
    /// Leave out synthesis points whose flow was never found.
    pub drop_stale: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            cluster_params: ClusterParams::DENSE,
            threshold: 15.0,
            score_mode: ScoreMode::PointCount,
            drop_stale: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return invalid("decision threshold must be non-negative");
        }
        self.cluster_params.validate()
    }

    pub fn decide(&self, score: f64) -> Decision {
        if score > self.threshold {
            Decision::Attacked
        } else {
            Decision::Benign
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub frame_index: u32,
    pub anomaly_score: f64,
    pub residual_cluster_count: usize,
    /// Raw incoming-frame indices, one ascending list per residual cluster.
    pub residual_point_indices: Vec<Vec<usize>>,
    pub decision: Decision,
    pub decision_threshold: f64,
}

impl DetectionReport {
    /// Every flagged raw index, ascending.
    pub fn flagged_points(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.residual_point_indices.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Everything up to the clustering step, reusable across detector settings.
#[derive(Debug, Clone)]
pub struct PreparedDetection {
    pub frame_index: u32,
    pub warped: WarpedSynthesis,
    /// Thinned incoming frame.
    pub incoming: PointCloud,
    /// Raw incoming indices behind each thinned point.
    pub incoming_members: Vec<Vec<usize>>,
}

impl PreparedDetection {
    pub fn merged(&self, drop_stale: bool) -> MergedCloud {
        if drop_stale {
            merge(&self.warped.synthesis.without_stale(), &self.incoming)
        } else {
            merge(&self.warped.synthesis, &self.incoming)
        }
    }

    pub fn report(&self, config: &DetectorConfig) -> Result<DetectionReport> {
        config.validate()?;
        let merged = self.merged(config.drop_stale);
        self.report_on(&merged, config)
    }

    /// Scores an already merged cloud built by [`merged`](Self::merged).
    pub fn report_on(&self, merged: &MergedCloud, config: &DetectorConfig) -> Result<DetectionReport> {
        score_merged(self.frame_index, merged, &self.incoming_members, config)
    }

    /// Per-point-normalized Chamfer distance between warped synthesis and incoming.
    pub fn baseline_cd(&self) -> Result<f64> {
        baseline_cd_metric(&self.warped.synthesis, &self.incoming)
    }
}

/// Residual clusters of `merged`, scored and decided.
///
/// `incoming_members[k]` lists the raw incoming indices behind the `k`-th
/// incoming point of `merged`.
pub fn score_merged(
    frame_index: u32,
    merged: &MergedCloud,
    incoming_members: &[Vec<usize>],
    config: &DetectorConfig,
) -> Result<DetectionReport> {
    config.validate()?;
    let offset = merged.num_synthesis();
    if merged.len() - offset != incoming_members.len() {
        return invalid("incoming index map does not match the merged cloud");
    }
    let residuals = residual_clusters(merged, config.cluster_params)?;
    let residual_point_indices: Vec<Vec<usize>> = residuals
        .iter()
        .map(|c| {
            let mut raw: Vec<usize> = c
                .iter()
                .flat_map(|&i| incoming_members[i - offset].iter().copied())
                .collect();
            raw.sort_unstable();
            raw
        })
        .collect();
    let anomaly_score = anomaly_score(&residual_point_indices, config.score_mode);
    Ok(DetectionReport {
        frame_index,
        anomaly_score,
        residual_cluster_count: residuals.len(),
        residual_point_indices,
        decision: config.decide(anomaly_score),
        decision_threshold: config.threshold,
    })
}

/// Warps the buffer's synthesis onto `incoming` and merges the two.
pub fn prepare(buffer: &HistoryBuffer, incoming: &Frame) -> Result<PreparedDetection> {
    if incoming.index <= buffer.latest_index() {
        return Err(crate::Error::OutOfOrder(format!(
            "incoming frame {} is not newer than buffered frame {}",
            incoming.index,
            buffer.latest_index()
        )));
    }
    incoming.cloud.require_finite("incoming frame")?;
    let config = buffer.config();
    let (thinned, members) = config.thin_incoming(&incoming.cloud)?;
    let warped = warp_to_incoming(&buffer.synthesis(), &thinned, config)?;
    Ok(PreparedDetection {
        frame_index: incoming.index,
        warped,
        incoming: thinned,
        incoming_members: members,
    })
}

/// Full check of one incoming frame against the buffered history.
pub fn detect(
    buffer: &HistoryBuffer,
    incoming: &Frame,
    config: &DetectorConfig,
) -> Result<DetectionReport> {
    prepare(buffer, incoming)?.report(config)
}

/// Chamfer distance with each direction averaged over its own cloud.
pub fn baseline_cd_metric(synthesis: &Synthesis, incoming: &PointCloud) -> Result<f64> {
    normalized_chamfer_distance(&synthesis.cloud, incoming)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn synth(pts: Vec<Point3>) -> Synthesis {
        let n = pts.len();
        Synthesis {
            cloud: pts.into(),
            source_frame: vec![0; n],
            stale: vec![false; n],
        }
    }

    #[test]
    fn merge_examples() {
        let inc: PointCloud = vec![Point3::ZERO; 3].into();
        let m = merge(&Synthesis::default(), &inc);
        assert_eq!(m.provenance, vec![Provenance::Incoming; 3]);
        let s = synth(vec![Point3::new(1.0, 0.0, 0.0); 2]);
        let m = merge(&s, &inc.select(&[0, 1]));
        let (s, i) = (Provenance::Synthesis, Provenance::Incoming);
        assert_eq!(m.provenance, vec![s, s, i, i]);
        assert_eq!(m.num_synthesis(), 2);
    }

    #[test]
    fn score_examples() {
        assert_eq!(anomaly_score(&[], ScoreMode::PointCount), 0.0);
        assert_eq!(anomaly_score(&[vec![0; 40]], ScoreMode::PointCount), 40.0);
        let two = [vec![0; 18], vec![0; 25]];
        assert_eq!(anomaly_score(&two, ScoreMode::PointCount), 43.0);
        assert_eq!(anomaly_score(&two, ScoreMode::ClusterCount), 2.0);
    }

    #[test]
    fn decision_is_strict() {
        let c = DetectorConfig::default();
        assert_eq!(c.decide(15.0), Decision::Benign);
        assert_eq!(c.decide(15.5), Decision::Attacked);
        assert_eq!(c.decide(0.0), Decision::Benign);
    }
}
