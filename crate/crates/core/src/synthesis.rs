//! Rolling history of frames warped to a common time.
//!
//! Each [`HistoryBuffer::advance`] fits one scene-flow field, from the newest
//! buffered frame to the arriving one, and hands it down the buffer: every
//! older frame takes the flow of the next-newer frame's voxel it falls into
//! (or the mean over the adjacent voxels). The cost per frame therefore stays
//! at a single solve however long the history is.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cloud::{check_sequence, Frame, Point3, PointCloud};
use crate::error::{invalid, Result};
use crate::sceneflow::{apply_flow, estimate_flow, FlowEstimate, FlowField, SfeConfig};
use crate::voxel::{downsample, downsample_with_members, neighbor_offsets, voxelize, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// History length `L`.
    pub capacity: usize,
    /// Voxel side for thinning each frame before it is buffered; `None` keeps raw frames.
    pub frame_voxel: Option<f64>,
    /// Voxel side of the grids used to hand flow down the buffer.
    pub propagation_voxel: f64,
    /// When set, the synthesis-to-incoming flow is fitted on a copy of the
    /// synthesis thinned at this voxel side, then evaluated at every point.
    pub warp_fit_voxel: Option<f64>,
    /// Thinning of the frame under test; `None` compares it raw.
    pub incoming_voxel: Option<f64>,
    pub sfe: SfeConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            capacity: 10,
            frame_voxel: Some(0.1),
            propagation_voxel: 0.3,
            warp_fit_voxel: Some(0.1),
            incoming_voxel: None,
            sfe: SfeConfig::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return invalid("history length must be at least 1");
        }
        for side in [
            Some(self.propagation_voxel),
            self.frame_voxel,
            self.warp_fit_voxel,
            self.incoming_voxel,
        ]
            .into_iter()
            .flatten()
        {
            if !(side.is_finite() && side > 0.0) {
                return invalid(format!("voxel side must be positive, got {side}"));
            }
        }
        self.sfe.validate()
    }

    /// Applies the per-frame thinning to a cloud.
    pub fn thin(&self, cloud: &PointCloud) -> Result<PointCloud> {
        match self.frame_voxel {
            Some(side) if !cloud.is_empty() => downsample(cloud, side),
            _ => Ok(cloud.clone()),
        }
    }

    /// Thinning of an incoming frame, with the raw indices behind each kept point.
    pub fn thin_incoming(&self, cloud: &PointCloud) -> Result<(PointCloud, Vec<Vec<usize>>)> {
        match self.incoming_voxel {
            Some(side) if !cloud.is_empty() => downsample_with_members(cloud, side),
            _ => Ok((cloud.clone(), (0..cloud.len()).map(|i| vec![i]).collect())),
        }
    }
}

/// Historical points moved to a common time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Synthesis {
    pub cloud: PointCloud,
    /// Index of the frame each point was observed in.
    pub source_frame: Vec<u32>,
    /// Points that at some step found no flow in their voxel neighborhood.
    pub stale: Vec<bool>,
}

impl Synthesis {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Drops the stale points.
    pub fn without_stale(&self) -> Synthesis {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !self.stale[i]).collect();
        Synthesis {
            cloud: self.cloud.select(&keep),
            source_frame: keep.iter().map(|&i| self.source_frame[i]).collect(),
            stale: vec![false; keep.len()],
        }
    }
}

/// Flow for the points of `older`, read off `newer`'s grid.
///
/// A point whose voxel is occupied in `newer_grid` gets the mean flow of that
/// voxel. Otherwise it gets the mean of the per-voxel mean flows of the
/// occupied 26-neighbors, or zero (flagged stale) if there are none.
pub fn propagate_flow(
    older: &PointCloud,
    older_grid: &VoxelGrid,
    newer_grid: &VoxelGrid,
    newer_flow: &FlowField,
) -> Result<(FlowField, Vec<bool>)> {
    if !older_grid.same_geometry(newer_grid) {
        return invalid("propagation grids must share side and origin");
    }
    let mut flows = vec![Point3::ZERO; older.len()];
    let mut stale = vec![false; older.len()];
    let mean_flow = |idx: &[usize]| {
        let mut acc = [0.0f64; 3];
        for &i in idx {
            let v = newer_flow[i].to_f64();
            acc[0] += v[0];
            acc[1] += v[1];
            acc[2] += v[2];
        }
        let n = idx.len() as f64;
        [acc[0] / n, acc[1] / n, acc[2] / n]
    };
    for (key, members) in older_grid.cells() {
        let f = if let Some(idx) = newer_grid.cell(key) {
            Some(mean_flow(idx))
        } else {
            let mut acc = [0.0f64; 3];
            let mut n = 0;
            for off in neighbor_offsets() {
                let k = [key[0] + off[0], key[1] + off[1], key[2] + off[2]];
                if let Some(idx) = newer_grid.cell(&k) {
                    let m = mean_flow(idx);
                    acc[0] += m[0];
                    acc[1] += m[1];
                    acc[2] += m[2];
                    n += 1;
                }
            }
            (n > 0).then(|| [acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
        };
        for &i in members {
            match f {
                Some(v) => flows[i] = Point3::from_f64(v),
                None => stale[i] = true,
            }
        }
    }
    Ok((flows.into(), stale))
}

#[derive(Debug, Clone)]
struct Entry {
    index: u32,
    timestamp: f64,
    /// Positions moved to the time of the newest buffered frame.
    warped: PointCloud,
    stale: Vec<bool>,
}

/// The last `L` frames, each moved to the time of the newest one.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    config: SynthesisConfig,
    entries: VecDeque<Entry>,
    solves: u64,
    last_flow: Option<FlowField>,
}

impl HistoryBuffer {
    /// Starts a buffer holding `first` alone.
    pub fn new(first: &Frame, config: SynthesisConfig) -> Result<Self> {
        config.validate()?;
        first.cloud.require_finite("history frame")?;
        let warped = config.thin(&first.cloud)?;
        let mut entries = VecDeque::with_capacity(config.capacity + 1);
        entries.push_back(Entry {
            index: first.index,
            timestamp: first.timestamp,
            stale: vec![false; warped.len()],
            warped,
        });
        Ok(Self {
            config,
            entries,
            solves: 0,
            last_flow: None,
        })
    }

    /// Builds a buffer from a sequence by advancing over every frame after the first.
    pub fn from_frames(frames: &[Frame], config: SynthesisConfig) -> Result<Self> {
        let Some(first) = frames.first() else {
            return invalid("history needs at least one frame");
        };
        check_sequence(frames)?;
        let mut buf = Self::new(first, config)?;
        for f in &frames[1..] {
            buf.advance(f)?;
        }
        Ok(buf)
    }

    pub fn config(&self) -> &SynthesisConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of scene-flow solves performed by [`advance`](Self::advance) so far.
    pub fn solve_count(&self) -> u64 {
        self.solves
    }

    /// Buffered frame indices, oldest first.
    pub fn frame_indices(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn latest_index(&self) -> u32 {
        self.entries.back().unwrap().index
    }

    /// Flow fitted by the most recent advance, on the previous newest frame's points.
    pub fn last_flow(&self) -> Option<&FlowField> {
        self.last_flow.as_ref()
    }

    /// Points of buffered frame `index`, moved to the newest frame's time.
    pub fn warped_frame(&self, index: u32) -> Option<&PointCloud> {
        self.entries.iter().find(|e| e.index == index).map(|e| &e.warped)
    }

    /// Adds `frame`, moving the buffered frames to its time.
    ///
    /// Runs exactly one scene-flow solve. The oldest frame is dropped once the
    /// buffer exceeds its capacity.
    pub fn advance(&mut self, frame: &Frame) -> Result<()> {
        let last = self.entries.back().unwrap();
        if frame.index <= last.index || !(frame.timestamp > last.timestamp) {
            return Err(crate::Error::OutOfOrder(format!(
                "frame {} (t={}) cannot follow frame {} (t={})",
                frame.index, frame.timestamp, last.index, last.timestamp
            )));
        }
        frame.cloud.require_finite("history frame")?;
        let incoming = self.config.thin(&frame.cloud)?;
        if incoming.is_empty() || last.warped.is_empty() {
            return invalid("cannot estimate flow with an empty frame");
        }
        self.solves += 1;
        let est = estimate_flow(&last.warped, &incoming, &self.config.sfe)?;
        self.hand_down(est.flow.clone())?;
        self.last_flow = Some(est.flow);
        self.entries.push_back(Entry {
            index: frame.index,
            timestamp: frame.timestamp,
            stale: vec![false; incoming.len()],
            warped: incoming,
        });
        while self.entries.len() > self.config.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Moves every entry by `newest_flow`, defined on the newest entry's points.
    fn hand_down(&mut self, newest_flow: FlowField) -> Result<()> {
        let side = self.config.propagation_voxel;
        let origin = self
            .entries
            .iter()
            .filter_map(|e| e.warped.bounds())
            .map(|(lo, _)| lo)
            .reduce(Point3::component_min)
            .unwrap_or_default();
        let n = self.entries.len();
        let mut flow = newest_flow;
        let mut newer_grid = voxelize(&self.entries[n - 1].warped, side, origin)?;
        for k in (0..n).rev() {
            if k + 1 < n {
                let older_grid = voxelize(&self.entries[k].warped, side, origin)?;
                let (f, stale) =
                    propagate_flow(&self.entries[k].warped, &older_grid, &newer_grid, &flow)?;
                for (s, new) in self.entries[k].stale.iter_mut().zip(stale) {
                    *s |= new;
                }
                newer_grid = older_grid;
                flow = f;
            }
            let e = &mut self.entries[k];
            e.warped = apply_flow(&e.warped, &flow)?;
        }
        Ok(())
    }

    /// All buffered points at the time of the newest frame.
    pub fn synthesis(&self) -> Synthesis {
        let total = self.entries.iter().map(|e| e.warped.len()).sum();
        let mut out = Synthesis {
            cloud: PointCloud::with_capacity(total),
            source_frame: Vec::with_capacity(total),
            stale: Vec::with_capacity(total),
        };
        for e in &self.entries {
            out.cloud.extend_from(&e.warped);
            out.source_frame.extend(std::iter::repeat_n(e.index, e.warped.len()));
            out.stale.extend_from_slice(&e.stale);
        }
        out
    }
}

/// Synthesis moved onto an incoming frame, with the fit that moved it.
#[derive(Debug, Clone)]
pub struct WarpedSynthesis {
    pub synthesis: Synthesis,
    /// Flow applied to each synthesis point.
    pub flow: FlowField,
    pub estimate: FlowEstimate,
    /// Cloud the flow was fitted on (the synthesis itself, or its thinned copy).
    pub fit_cloud: PointCloud,
}

/// Fits a flow from `synthesis` to `incoming` and applies it.
pub fn warp_to_incoming(
    synthesis: &Synthesis,
    incoming: &PointCloud,
    config: &SynthesisConfig,
) -> Result<WarpedSynthesis> {
    if synthesis.is_empty() || incoming.is_empty() {
        return invalid("warping needs a non-empty synthesis and incoming frame");
    }
    let fit_cloud = match config.warp_fit_voxel {
        Some(side) => downsample(&synthesis.cloud, side)?,
        None => synthesis.cloud.clone(),
    };
    let estimate = estimate_flow(&fit_cloud, incoming, &config.sfe)?;
    let flow = if config.warp_fit_voxel.is_some() {
        estimate.prior.flow_at(&synthesis.cloud)
    } else {
        estimate.flow.clone()
    };
    Ok(WarpedSynthesis {
        synthesis: Synthesis {
            cloud: apply_flow(&synthesis.cloud, &flow)?,
            source_frame: synthesis.source_frame.clone(),
            stale: synthesis.stale.clone(),
        },
        flow,
        estimate,
        fit_cloud,
    })
}
