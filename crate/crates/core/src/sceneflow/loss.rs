//! Chamfer and coherence terms of the flow objective.

use crate::cloud::PointCloud;
use crate::clustering::ClusterLabeling;
use crate::error::{invalid, Result};
use crate::sceneflow::{apply_flow, FlowField, SfeConfig};
use crate::spatial::KdTree;

/// Values of the individual objective terms (unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub chamfer: f64,
    pub coherence: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        self.chamfer.is_finite() && self.coherence.is_finite() && self.total.is_finite()
    }
}

#[inline]
fn diff(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn sq(v: &[f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Bidirectional sum of squared nearest-neighbor distances between `source`
/// and the points indexed by `target`. With `grad`, also accumulates
/// `d/d source` into it (nearest neighbors held fixed).
pub(crate) fn chamfer_terms(
    source: &[[f64; 3]],
    target: &KdTree,
    mut grad: Option<&mut [[f64; 3]]>,
) -> f64 {
    let mut total = 0.0;
    for (i, p) in source.iter().enumerate() {
        let (j, d2) = target.nearest(p).expect("non-empty target");
        total += d2;
        if let Some(g) = grad.as_deref_mut() {
            let d = diff(p, target.point(j));
            for k in 0..3 {
                g[i][k] += 2.0 * d[k];
            }
        }
    }
    let source_tree = KdTree::build(source.to_vec());
    for j in 0..target.len() {
        let q = target.point(j);
        let (i, d2) = source_tree.nearest(q).expect("non-empty source");
        total += d2;
        if let Some(g) = grad.as_deref_mut() {
            let d = diff(&source[i], q);
            for k in 0..3 {
                g[i][k] += 2.0 * d[k];
            }
        }
    }
    total
}

/// `(1/N^2) * sum over ordered same-cluster pairs of w * |f_i - f_j|^2`.
///
/// Uses `sum_{i,j in C} |f_i - f_j|^2 = 2 |C| sum_{i in C} |f_i - mean_C|^2`.
/// With `grad`, accumulates `scale * d/d f_i` into it.
pub(crate) fn coherence_terms(
    flows: &[[f64; 3]],
    labeling: &ClusterLabeling,
    pair_weight: f64,
    grad: Option<(&mut [[f64; 3]], f64)>,
) -> f64 {
    let k = labeling.num_clusters();
    let n_valid = labeling.num_clustered();
    if n_valid == 0 {
        return 0.0;
    }
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (f, l) in flows.iter().zip(labeling.labels()) {
        if let Some(c) = *l {
            counts[c] += 1;
            for a in 0..3 {
                sums[c][a] += f[a];
            }
        }
    }
    let means: Vec<[f64; 3]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = c as f64;
            [s[0] / c, s[1] / c, s[2] / c]
        })
        .collect();
    let nn = (n_valid * n_valid) as f64;
    let mut spread = vec![0.0f64; k];
    for (f, l) in flows.iter().zip(labeling.labels()) {
        if let Some(c) = *l {
            spread[c] += sq(&diff(f, &means[c]));
        }
    }
    let loss = spread
        .iter()
        .zip(&counts)
        .map(|(s, &c)| 2.0 * c as f64 * s)
        .sum::<f64>()
        * pair_weight
        / nn;
    if let Some((g, scale)) = grad {
        for (i, l) in labeling.labels().iter().enumerate() {
            if let Some(c) = *l {
                let d = diff(&flows[i], &means[c]);
                let s = scale * pair_weight * 4.0 * counts[c] as f64 / nn;
                for a in 0..3 {
                    g[i][a] += s * d[a];
                }
            }
        }
    }
    loss
}

/// Sum over both directions of squared nearest-neighbor distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("chamfer distance needs two non-empty clouds");
    }
    let tree = KdTree::build(b.as_f64());
    Ok(chamfer_terms(&a.as_f64(), &tree, None))
}

/// Chamfer distance with each direction divided by its cloud size.
pub fn normalized_chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("chamfer distance needs two non-empty clouds");
    }
    let ta = KdTree::build(a.as_f64());
    let tb = KdTree::build(b.as_f64());
    let forward: f64 = a.iter().map(|p| tb.nearest(&p.to_f64()).unwrap().1).sum();
    let backward: f64 = b.iter().map(|q| ta.nearest(&q.to_f64()).unwrap().1).sum();
    Ok(forward / a.len() as f64 + backward / b.len() as f64)
}

pub fn coherence_loss(
    source: &PointCloud,
    flow: &FlowField,
    labeling: &ClusterLabeling,
    pair_weight: f64,
) -> Result<f64> {
    if flow.len() != source.len() || labeling.len() != source.len() {
        return invalid(format!(
            "misaligned coherence inputs: {} points, {} flows, {} labels",
            source.len(),
            flow.len(),
            labeling.len()
        ));
    }
    Ok(coherence_terms(&flow.as_f64(), labeling, pair_weight, None))
}

/// Mean squared deviation of each clustered point's flow from its cluster mean.
///
/// Zero when nothing is clustered.
pub fn within_cluster_variance(flow: &FlowField, labeling: &ClusterLabeling) -> Result<f64> {
    if flow.len() != labeling.len() {
        return invalid(format!(
            "{} flows for {} labels",
            flow.len(),
            labeling.len()
        ));
    }
    let n = labeling.num_clustered();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for members in labeling.members() {
        let mut mean = [0.0f64; 3];
        for &i in &members {
            let v = flow[i].to_f64();
            for a in 0..3 {
                mean[a] += v[a] / members.len() as f64;
            }
        }
        total += members
            .iter()
            .map(|&i| sq(&diff(&flow[i].to_f64(), &mean)))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}

/// `alpha * chamfer(source + flow, target) + beta * coherence(source, flow)`.
pub fn total_loss(
    source: &PointCloud,
    target: &PointCloud,
    flow: &FlowField,
    labeling: &ClusterLabeling,
    config: &SfeConfig,
) -> Result<f64> {
    let warped = apply_flow(source, flow)?;
    let coherence = coherence_loss(source, flow, labeling, config.pair_weight)?;
    let chamfer = chamfer_distance(&warped, target)?;
    Ok(config.alpha * chamfer + config.beta * coherence)
}
