//! Point clouds and the symmetric Chamfer distance.

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{Pose, UnitQuaternion, Vec3};

/// World-frame points in meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Result<Vec3> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(self.points.iter().sum::<Vec3>() / self.points.len() as f64)
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| pose.apply(p)).collect())
    }

    pub fn translated(&self, offset: &Vec3) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| p + offset).collect())
    }

    /// Rotates about `center`.
    pub fn rotated_about(&self, rotation: &UnitQuaternion, center: &Vec3) -> PointCloud {
        PointCloud::new(
            self.points
                .iter()
                .map(|p| rotation.apply(&(p - center)) + center)
                .collect(),
        )
    }

    /// Copy shifted so its centroid is at the origin.
    pub fn centered(&self) -> Result<PointCloud> {
        let c = self.centroid()?;
        Ok(self.translated(&-c))
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        let c = self.centroid()?;
        let n = self.points.len() as f64;
        Ok(self
            .points
            .iter()
            .map(|p| (p - c) * (p - c).transpose())
            .sum::<Matrix3<f64>>()
            / n)
    }

    /// Farthest-point subsample of at most `max_points`, seeded from a
    /// random start point.
    pub fn farthest_point_subsample<R: Rng + ?Sized>(
        &self,
        max_points: usize,
        rng: &mut R,
    ) -> PointCloud {
        let idx = self.farthest_point_indices(max_points, rng);
        PointCloud::new(idx.iter().map(|&i| self.points[i]).collect())
    }

    /// Indices chosen by [`Self::farthest_point_subsample`], in selection
    /// order; every index when the cloud is already small enough.
    pub fn farthest_point_indices<R: Rng + ?Sized>(
        &self,
        max_points: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let n = self.points.len();
        if n <= max_points || max_points == 0 {
            return (0..n).collect();
        }
        let mut chosen = Vec::with_capacity(max_points);
        let mut dist = vec![f64::INFINITY; n];
        let mut current = rng.random_range(0..n);
        for _ in 0..max_points {
            chosen.push(current);
            let c = self.points[current];
            let mut best = (0usize, -1.0f64);
            for (i, p) in self.points.iter().enumerate() {
                let d = (p - c).norm_squared();
                if d < dist[i] {
                    dist[i] = d;
                }
                if dist[i] > best.1 {
                    best = (i, dist[i]);
                }
            }
            current = best.0;
        }
        chosen
    }
}

/// Static nearest-neighbor index over a cloud.
pub struct NearestIndex {
    tree: ImmutableKdTree<f64, u32, 3, 32>,
}

impl NearestIndex {
    pub fn new(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let pts: Vec<[f64; 3]> = cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Ok(NearestIndex {
            tree: ImmutableKdTree::new_from_slice(&pts),
        })
    }

    /// Index and squared distance of the nearest indexed point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let n = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        (n.item as usize, n.distance)
    }

    pub fn nearest_sq(&self, q: &Vec3) -> f64 {
        self.tree
            .nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z])
            .distance
    }

    /// Mean squared nearest-neighbor distance from `queries` into the index.
    pub fn mean_sq<'a>(&self, queries: impl ExactSizeIterator<Item = Vec3> + 'a) -> f64 {
        let n = queries.len();
        let total: f64 = queries.map(|q| self.nearest_sq(&q)).sum();
        total / n as f64
    }
}

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = NearestIndex::new(a)?;
    let ib = NearestIndex::new(b)?;
    Ok(ib.mean_sq(a.points.iter().copied()) + ia.mean_sq(b.points.iter().copied()))
}
