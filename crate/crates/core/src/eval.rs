//! Kitting metrics and baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::cloud::chamfer;
use crate::cloud::{NearestIndex, PointCloud};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::render::{deproject, segment_workspace, CameraModel, DepthImage};
use crate::so3::{rad, sample_with_angle, Pose, UnitQuaternion, Vec3};

/// Default segmentation slack against the workspace plane, meters.
pub const DEFAULT_SEGMENT_SLACK: f64 = 0.002;

/// Monte-Carlo estimate of the fraction of object volume inside the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kappa_hat: f64,
    pub n_samples: usize,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

/// Normal-approximation 95 % interval `k +- 1.96 sqrt(k (1 - k) / n)`,
/// clamped to `[0, 1]`.
pub fn confidence_interval(kappa_hat: f64, n: usize) -> (f64, f64) {
    let half = 1.96 * (kappa_hat * (1.0 - kappa_hat) / n as f64).sqrt();
    ((kappa_hat - half).max(0.0), (kappa_hat + half).min(1.0))
}

impl FitResult {
    pub fn from_counts(inside: usize, n: usize) -> Self {
        let kappa_hat = inside as f64 / n as f64;
        let (ci95_low, ci95_high) = confidence_interval(kappa_hat, n);
        FitResult {
            kappa_hat,
            n_samples: n,
            ci95_low,
            ci95_high,
        }
    }
}

/// Samples `n` points uniformly in the posed object and counts those inside
/// the posed cavity.
pub fn percent_fit<R: Rng + ?Sized>(
    object_mesh: &TriMesh,
    object_pose: &Pose,
    cavity_mesh: &TriMesh,
    cavity_pose: &Pose,
    n: usize,
    rng: &mut R,
) -> Result<FitResult> {
    if !object_mesh.is_watertight() || !cavity_mesh.is_watertight() {
        return Err(Error::NotWatertight);
    }
    let samples = object_mesh.sample_volume_points(n, rng)?;
    let to_cavity = cavity_pose.inverse().compose(object_pose);
    let inside = samples
        .points
        .iter()
        .filter(|p| cavity_mesh.contains_unchecked(&to_cavity.apply(p)))
        .count();
    Ok(FitResult::from_counts(inside, n))
}

/// Rotation with the same angle as `true_rotation` about a uniformly random
/// axis.
pub fn baseline_random<R: Rng + ?Sized>(
    true_rotation: &UnitQuaternion,
    rng: &mut R,
) -> UnitQuaternion {
    sample_with_angle(rng, true_rotation.angle())
}

/// Outcome of the planar Chamfer search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarAlignment {
    /// Rotation about the vertical axis through the object centroid, degrees
    /// in `[0, 360)`.
    pub yaw_deg: f64,
    pub rotation: UnitQuaternion,
    /// Horizontal centroid offset, object to cavity (z = 0).
    pub translation: Vec3,
    /// Object cloud centroid the rotation is applied about.
    pub center: Vec3,
    pub cost: f64,
}

impl PlanarAlignment {
    /// Rigid motion that rotates about `center` and then translates.
    pub fn pose(&self) -> Pose {
        Pose::from_translation(self.translation)
            .compose(&Pose::identity().rotated_about(&self.rotation, &self.center))
    }
}

fn segmented_cloud(
    image: &DepthImage,
    camera: &CameraModel,
    plane_depth: f64,
) -> Result<PointCloud> {
    let mask = segment_workspace(image, plane_depth, DEFAULT_SEGMENT_SLACK);
    let cloud = deproject(image, camera, Some(&mask))?;
    if cloud.is_empty() {
        return Err(Error::EmptyForeground);
    }
    Ok(cloud)
}

/// Squared distance from `p` to the pixel cell that sampled `q`: a square of
/// side `side` in the camera image plane, zero thickness along the optical
/// axis.
fn cell_distance_sq(p: &Vec3, q: &Vec3, side: f64, axes: &[Vec3; 3]) -> f64 {
    let d = p - q;
    let h = 0.5 * side;
    let dx = (d.dot(&axes[0]).abs() - h).max(0.0);
    let dy = (d.dot(&axes[1]).abs() - h).max(0.0);
    let dz = d.dot(&axes[2]);
    dx * dx + dy * dy + dz * dz
}

/// Centroid alignment followed by an exhaustive 1 degree search over
/// rotations about the vertical axis, scored by Chamfer distance to the
/// pixel cells of the other cloud rather than their centres, so that two
/// clouds on the same pixel lattice gain nothing from staying unrotated.
/// Ties go to the smaller rotation angle.
pub fn baseline_2d(
    image_object: &DepthImage,
    image_cavity_goal: &DepthImage,
    camera: &CameraModel,
    plane_depth: f64,
) -> Result<PlanarAlignment> {
    let obj = segmented_cloud(image_object, camera, plane_depth)?;
    let cav = segmented_cloud(image_cavity_goal, camera, plane_depth)?;
    let sides = |c: &PointCloud| -> Vec<f64> {
        c.points
            .iter()
            .map(|p| {
                camera
                    .project(p)
                    .map_or(0.0, |(_, _, d)| camera.pixel_footprint(d))
            })
            .collect()
    };
    let (sa, sb) = (sides(&obj), sides(&cav));
    let r = camera.pose.rotation;
    let axes = [
        r.apply(&Vec3::x()),
        r.apply(&Vec3::y()),
        r.apply(&Vec3::z()),
    ];
    let co = obj.centroid()?;
    let cc = cav.centroid()?;
    let a = obj.translated(&-co);
    let b = cav.translated(&-cc);
    let ia = NearestIndex::new(&a)?;
    let ib = NearestIndex::new(&b)?;
    let one_way = |from: &PointCloud,
                   to: &PointCloud,
                   index: &NearestIndex,
                   side: &[f64],
                   q: &UnitQuaternion| {
        let total: f64 = from
            .points
            .iter()
            .map(|p| {
                let m = q.apply(p);
                let (j, _) = index.nearest(&m);
                cell_distance_sq(&m, &to.points[j], side[j], &axes)
            })
            .sum();
        total / from.len() as f64
    };
    let mut best: Option<(u32, f64)> = None;
    for yaw in 0..360u32 {
        let q = UnitQuaternion::rot_z(rad(yaw as f64));
        let cost = one_way(&a, &b, &ib, &sb, &q) + one_way(&b, &a, &ia, &sa, &q.inverse());
        let size = |y: u32| y.min(360 - y);
        best = match best {
            None => Some((yaw, cost)),
            Some((by, bc)) => {
                let tie = (cost - bc).abs() <= 1e-12 * bc.max(1e-300);
                if cost < bc && !tie || tie && size(yaw) < size(by) {
                    Some((yaw, cost))
                } else {
                    Some((by, bc))
                }
            }
        };
    }
    let (yaw, cost) = best.expect("360 candidates");
    let d = cc - co;
    Ok(PlanarAlignment {
        yaw_deg: yaw as f64,
        rotation: UnitQuaternion::rot_z(rad(yaw as f64)),
        translation: Vec3::new(d.x, d.y, 0.0),
        center: co,
        cost,
    })
}
