//! Runtime-optimized scene flow.
//!
//! The flow field between two frames is represented by a small MLP mapping a
//! point's coordinates to its 3-D displacement. The network is fitted from
//! scratch for every frame pair by minimizing
//!
//! ```text
//! alpha * chamfer(F1 + flow, F2) + beta * coherence(F1, flow)
//! ```
//!
//! where the coherence term penalizes flow differences between points of the
//! same DBSCAN cluster of `F1`. The clustering is computed once on the
//! unwarped `F1` and held fixed for the whole solve.

mod loss;
mod mlp;
mod optimize;

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::clustering::ClusterParams;
use crate::error::{invalid, Result};

pub use loss::{
    chamfer_distance, coherence_loss, normalized_chamfer_distance, total_loss,
    within_cluster_variance, LossTerms,
};
pub use mlp::{Gradients, MlpPrior, Real};
pub use optimize::{
    estimate_flow, estimate_flow_in, loss_gradient, FlowEstimate, FlowProblem,
    OptimizationTrace, TraceEntry,
};

/// Per-point displacement, index-aligned with a source cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowField {
    vectors: Vec<Point3>,
}

impl FlowField {
    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![Point3::ZERO; n],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn vectors(&self) -> &[Point3] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.vectors.iter()
    }

    pub fn negated(&self) -> FlowField {
        self.vectors.iter().map(|&v| -v).collect::<Vec<_>>().into()
    }

    /// Largest displacement magnitude, 0 for an empty field.
    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn as_f64(&self) -> Vec<[f64; 3]> {
        self.vectors.iter().map(|v| v.to_f64()).collect()
    }
}

impl From<Vec<Point3>> for FlowField {
    fn from(vectors: Vec<Point3>) -> Self {
        Self { vectors }
    }
}

impl std::ops::Index<usize> for FlowField {
    type Output = Point3;
    fn index(&self, i: usize) -> &Point3 {
        &self.vectors[i]
    }
}

/// Moves every point by its flow vector.
pub fn apply_flow(cloud: &PointCloud, flow: &FlowField) -> Result<PointCloud> {
    if cloud.len() != flow.len() {
        return invalid(format!(
            "flow has {} vectors for {} points",
            flow.len(),
            cloud.len()
        ));
    }
    Ok(cloud.iter().zip(flow.iter()).map(|(&p, &f)| p + f).collect())
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Fixed learning rate. A step that would raise the objective is retried
    /// at half the rate, and the reduced rate is kept for later steps.
    GradientDescent,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
}

/// Scene-flow solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SfeConfig {
    /// Chamfer weight.
    pub alpha: f64,
    /// Coherence weight.
    pub beta: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub hidden_width: usize,
    /// Number of linear layers, input and output layers included.
    pub num_layers: usize,
    /// Constant pair weight `w(p_i, p_j)` of the coherence term.
    pub pair_weight: f64,
    /// Clustering that defines which points must move together.
    pub cluster_params: ClusterParams,
    pub optimizer: Optimizer,
    /// Hidden-layer init bound is `init_gain / sqrt(fan_in)`.
    pub init_gain: f64,
    pub seed: u64,
}

impl Default for SfeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            learning_rate: 0.0008,
            iterations: 30,
            hidden_width: 128,
            num_layers: 6,
            pair_weight: 1.0,
            cluster_params: ClusterParams::DENSE,
            optimizer: Optimizer::GradientDescent,
            init_gain: 1.0,
            seed: 0,
        }
    }
}

impl SfeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return invalid("iterations must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return invalid("alpha must be non-negative");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return invalid("beta must be non-negative");
        }
        if !self.pair_weight.is_finite() {
            return invalid("pair weight must be finite");
        }
        if self.num_layers < 2 || self.hidden_width == 0 {
            return invalid("network needs at least 2 layers and a positive width");
        }
        self.cluster_params.validate()
    }
}
