//! DBSCAN density clustering.
//!
//! A point is *core* when at least `min_pts` points (itself included) lie
//! within `eps`. Clusters are the connected components of core points under
//! the `eps` relation. A non-core point within `eps` of some core point joins
//! the cluster of the lowest-index such core point; every other point is an
//! outlier. Cluster ids are assigned in order of each cluster's lowest-index
//! core point, which makes the labeling independent of traversal order.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::spatial::KdTree;

/// DBSCAN thresholds: neighbor radius `eps` (meters) and minimum population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterParams {
    /// Operating point for dense injections (up to 200 points).
    pub const DENSE: ClusterParams = ClusterParams {
        eps: 0.25,
        min_pts: 17,
    };
    /// Operating point for sparse injections (up to 64 points).
    pub const SPARSE: ClusterParams = ClusterParams {
        eps: 0.75,
        min_pts: 9,
    };

    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        let p = Self { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return invalid(format!("eps must be positive, got {}", self.eps));
        }
        if self.min_pts == 0 {
            return invalid("min_pts must be at least 1");
        }
        Ok(())
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self::DENSE
    }
}

/// Per-point cluster assignment; `None` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterLabeling {
    labels: Vec<Option<usize>>,
    num_clusters: usize,
}

impl ClusterLabeling {
    /// Builds a labeling from raw labels, checking that ids are dense in `0..K`.
    pub fn from_labels(labels: Vec<Option<usize>>) -> Result<Self> {
        let k = labels.iter().flatten().map(|&l| l + 1).max().unwrap_or(0);
        let mut used = vec![false; k];
        for &l in labels.iter().flatten() {
            used[l] = true;
        }
        if used.iter().any(|u| !u) {
            return invalid("cluster ids must cover 0..K without gaps");
        }
        Ok(Self {
            labels,
            num_clusters: k,
        })
    }

    #[inline]
    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Number of points that belong to some cluster.
    pub fn num_clustered(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn num_outliers(&self) -> usize {
        self.labels.len() - self.num_clustered()
    }

    /// Member indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

/// Whether points `i` and `j` share a (non-outlier) cluster.
pub fn same_cluster(labeling: &ClusterLabeling, i: usize, j: usize) -> Result<bool> {
    let n = labeling.len();
    if i >= n || j >= n {
        return invalid(format!("index ({i}, {j}) out of range for {n} points"));
    }
    Ok(matches!((labeling.labels[i], labeling.labels[j]), (Some(a), Some(b)) if a == b))
}

pub fn dbscan(cloud: &PointCloud, params: ClusterParams) -> Result<ClusterLabeling> {
    params.validate()?;
    cloud.require_finite("dbscan")?;
    let n = cloud.len();
    let tree = KdTree::build(cloud.as_f64());
    let eps2 = params.eps * params.eps;

    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut nb = Vec::new();
        tree.within(tree.point(i), eps2, &mut nb);
        nb.sort_unstable();
        neighbors.push(nb);
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(k);
        stack.push(seed);
        while let Some(c) = stack.pop() {
            for &m in &neighbors[c] {
                if core[m] && labels[m].is_none() {
                    labels[m] = Some(k);
                    stack.push(m);
                }
            }
        }
        k += 1;
    }
    for i in 0..n {
        if !core[i] {
            // neighbors are sorted, so the first core one has the lowest index
            labels[i] = neighbors[i].iter().find(|&&m| core[m]).and_then(|&m| labels[m]);
        }
    }
    Ok(ClusterLabeling {
        labels,
        num_clusters: k,
    })
}
