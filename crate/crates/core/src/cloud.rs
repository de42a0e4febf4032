//! Point, cloud and frame types shared by every stage of the pipeline.
//!
//! Coordinates are stored as `f32` meters, matching the on-disk frame format.
//! Anything that accumulates (sums, distances, centroids) is done in `f64`.

use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A 3-D point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    #[inline]
    pub const fn new(x: f32, y: f32, z: f32) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_f64(v: [f64; 3]) -> Self {
        Self::new(v[0] as f32, v[1] as f32, v[2] as f32)
    }

    #[inline]
    pub fn to_f64(self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Squared Euclidean distance, accumulated in `f64`.
    #[inline]
    pub fn distance_squared(self, other: Point3) -> f64 {
        let a = self.to_f64();
        let b = other.to_f64();
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let dz = a[2] - b[2];
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.distance_squared(Point3::ZERO).sqrt()
    }

    #[inline]
    pub fn component_min(self, other: Point3) -> Point3 {
        Point3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    #[inline]
    pub fn component_max(self, other: Point3) -> Point3 {
        Point3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f32> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f32) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl From<[f32; 3]> for Point3 {
    fn from(v: [f32; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

/// An ordered set of points. Index `i` names the same point until the cloud
/// is mutated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            points: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn push(&mut self, p: Point3) {
        self.points.push(p);
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.is_finite())
    }

    pub(crate) fn require_finite(&self, what: &str) -> Result<()> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(i) => invalid(format!("{what}: point {i} is not finite")),
            None => Ok(()),
        }
    }

    /// Component-wise bounding box, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points[1..].iter().fold((first, first), |(lo, hi), &p| {
            (lo.component_min(p), hi.component_max(p))
        }))
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut acc = [0.0f64; 3];
        for p in &self.points {
            let v = p.to_f64();
            acc[0] += v[0];
            acc[1] += v[1];
            acc[2] += v[2];
        }
        let n = self.points.len() as f64;
        Some(Point3::from_f64([acc[0] / n, acc[1] / n, acc[2] / n]))
    }

    /// Copy of the points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        indices.iter().map(|&i| self.points[i]).collect()
    }

    pub(crate) fn as_f64(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.to_f64()).collect()
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        Self { points }
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

impl Index<usize> for PointCloud {
    type Output = Point3;
    #[inline]
    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// One timestamped sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub index: u32,
    /// Seconds.
    pub timestamp: f64,
    pub cloud: PointCloud,
}

impl Frame {
    pub fn new(index: u32, timestamp: f64, cloud: PointCloud) -> Self {
        Self {
            index,
            timestamp,
            cloud,
        }
    }
}

/// Checks that indices and timestamps strictly increase along the sequence.
pub fn check_sequence(frames: &[Frame]) -> Result<()> {
    for w in frames.windows(2) {
        if w[1].index <= w[0].index || !(w[1].timestamp > w[0].timestamp) {
            return Err(crate::Error::OutOfOrder(format!(
                "frame {} (t={}) follows frame {} (t={})",
                w[1].index, w[1].timestamp, w[0].index, w[0].timestamp
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_centroid() {
        let c: PointCloud = vec![Point3::new(0.0, 1.0, 2.0), Point3::new(2.0, -1.0, 4.0)].into();
        let (lo, hi) = c.bounds().unwrap();
        assert_eq!(lo, Point3::new(0.0, -1.0, 2.0));
        assert_eq!(hi, Point3::new(2.0, 1.0, 4.0));
        assert_eq!(c.centroid().unwrap(), Point3::new(1.0, 0.0, 3.0));
        assert!(PointCloud::new().bounds().is_none());
    }

    #[test]
    fn sequence_order() {
        let f = |i, t| Frame::new(i, t, PointCloud::new());
        assert!(check_sequence(&[f(0, 0.0), f(1, 0.1)]).is_ok());
        assert!(check_sequence(&[f(1, 0.0), f(1, 0.1)]).is_err());
        assert!(check_sequence(&[f(0, 0.1), f(1, 0.1)]).is_err());
    }
}
