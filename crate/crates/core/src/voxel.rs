//! Cubic voxel grids and centroid downsampling.

use std::collections::HashMap;

use crate::cloud::{Point3, PointCloud};
use crate::error::{invalid, Result};

/// Integer voxel coordinate.
pub type VoxelIndex = [i64; 3];

/// Offsets of the 26 voxels sharing a face, edge or corner with a voxel.
pub fn neighbor_offsets() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(|dx| {
        (-1..=1).flat_map(move |dy| {
            (-1..=1).filter_map(move |dz| {
                if dx == 0 && dy == 0 && dz == 0 {
                    None
                } else {
                    Some([dx, dy, dz])
                }
            })
        })
    })
}

/// Partition of a cloud's point indices into cubic cells of edge `side`.
///
/// The cell of point `p` is `floor((p - origin) / side)` per axis, so a point
/// lying exactly on a boundary belongs to the higher-index cell.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    side: f64,
    origin: Point3,
    cells: HashMap<VoxelIndex, Vec<usize>>,
    /// Cell keys in order of first occurrence.
    order: Vec<VoxelIndex>,
}

fn check_side(side: f64) -> Result<()> {
    if side.is_finite() && side > 0.0 {
        Ok(())
    } else {
        invalid(format!("voxel side must be positive and finite, got {side}"))
    }
}

impl VoxelGrid {
    #[inline]
    pub fn side(&self) -> f64 {
        self.side
    }

    #[inline]
    pub fn origin(&self) -> Point3 {
        self.origin
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Voxel index of an arbitrary point under this grid's geometry.
    #[inline]
    pub fn index_of(&self, p: Point3) -> VoxelIndex {
        voxel_index(p, self.origin, self.side)
    }

    pub fn cell(&self, index: &VoxelIndex) -> Option<&[usize]> {
        self.cells.get(index).map(Vec::as_slice)
    }

    /// Cells in first-occurrence order.
    pub fn cells(&self) -> impl Iterator<Item = (&VoxelIndex, &[usize])> {
        self.order
            .iter()
            .map(move |k| (k, self.cells[k].as_slice()))
    }

    /// True when both grids map points to voxels identically.
    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.side == other.side && self.origin == other.origin
    }
}

#[inline]
fn voxel_index(p: Point3, origin: Point3, side: f64) -> VoxelIndex {
    let a = p.to_f64();
    let o = origin.to_f64();
    [
        ((a[0] - o[0]) / side).floor() as i64,
        ((a[1] - o[1]) / side).floor() as i64,
        ((a[2] - o[2]) / side).floor() as i64,
    ]
}

/// Buckets every point of `cloud` into voxels of edge `side` anchored at `origin`.
pub fn voxelize(cloud: &PointCloud, side: f64, origin: Point3) -> Result<VoxelGrid> {
    check_side(side)?;
    cloud.require_finite("voxelize")?;
    if !origin.is_finite() {
        return invalid("voxel origin must be finite");
    }
    let mut cells: HashMap<VoxelIndex, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (i, &p) in cloud.iter().enumerate() {
        let key = voxel_index(p, origin, side);
        cells
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }
    Ok(VoxelGrid {
        side,
        origin,
        cells,
        order,
    })
}

/// Voxelizes with the origin at the cloud's component-wise minimum.
pub fn voxelize_default(cloud: &PointCloud, side: f64) -> Result<VoxelGrid> {
    let origin = cloud.bounds().map(|(lo, _)| lo).unwrap_or_default();
    voxelize(cloud, side, origin)
}

/// Replaces the points of each occupied voxel with their centroid.
///
/// Output order follows the first point seen in each voxel.
pub fn downsample(cloud: &PointCloud, side: f64) -> Result<PointCloud> {
    Ok(downsample_with_members(cloud, side)?.0)
}

/// Like [`downsample`], also returning the source indices behind each output point.
pub fn downsample_with_members(
    cloud: &PointCloud,
    side: f64,
) -> Result<(PointCloud, Vec<Vec<usize>>)> {
    let grid = voxelize_default(cloud, side)?;
    let mut out = PointCloud::with_capacity(grid.num_cells());
    let mut members = Vec::with_capacity(grid.num_cells());
    for (_, idx) in grid.cells() {
        out.push(centroid_of(cloud, idx));
        members.push(idx.to_vec());
    }
    Ok((out, members))
}

fn centroid_of(cloud: &PointCloud, idx: &[usize]) -> Point3 {
    let mut acc = [0.0f64; 3];
    for &i in idx {
        let v = cloud[i].to_f64();
        acc[0] += v[0];
        acc[1] += v[1];
        acc[2] += v[2];
    }
    let n = idx.len() as f64;
    Point3::from_f64([acc[0] / n, acc[1] / n, acc[2] / n])
}
