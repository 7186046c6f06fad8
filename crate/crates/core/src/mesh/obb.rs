//! Approximate minimum-volume oriented bounding boxes.
//!
//! Candidate orientations: one box axis along each convex-hull face normal,
//! the remaining two from the minimum-area rectangle of the hull projected
//! onto that face plane (rotating calipers over projected hull edges). The
//! principal axes of the hull vertices and the world axes are tried as well.
//! The best candidate is exact for boxes and within a few percent of the
//! true minimum for the shapes this toolkit deals with.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::hull::convex_hull;
use super::TriMesh;
use crate::error::{Error, Result};
use crate::so3::{Pose, UnitQuaternion, Vec3};

/// Box with `half_extents` sorted descending; column `k` of the rotation
/// matrix is the axis of `half_extents[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half_extents: [f64; 3],
    pub rotation: UnitQuaternion,
}

impl OrientedBox {
    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.iter().product::<f64>()
    }

    pub fn axes(&self) -> Matrix3<f64> {
        self.rotation.to_matrix()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.rotation, self.center)
    }

    pub fn transformed(&self, pose: &Pose) -> OrientedBox {
        OrientedBox {
            center: pose.apply(&self.center),
            half_extents: self.half_extents,
            rotation: pose.rotation.compose(&self.rotation),
        }
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let local = self.rotation.inverse().apply(&(p - self.center));
        (0..3).all(|k| local[k].abs() <= self.half_extents[k] + tol)
    }

    /// Closed box as a triangle mesh (12 faces, outward winding).
    pub fn to_mesh(&self) -> TriMesh {
        let h = self.half_extents;
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let local = Vec3::new(
                if i & 1 == 0 { -h[0] } else { h[0] },
                if i & 2 == 0 { -h[1] } else { h[1] },
                if i & 4 == 0 { -h[2] } else { h[2] },
            );
            vertices.push(self.rotation.apply(&local) + self.center);
        }
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriMesh::new(vertices, faces, Some("obb".into()))
            .expect("box with positive extents is a valid mesh")
    }

    /// Longest over shortest side, minus one.
    pub fn eccentricity(&self) -> f64 {
        self.half_extents[0] / self.half_extents[2] - 1.0
    }
}

struct Candidate {
    volume: f64,
    axes: Matrix3<f64>,
    lo: Vec3,
    hi: Vec3,
}

fn fit_axes(points: &[Vec3], axes: Matrix3<f64>) -> Candidate {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let t = axes.transpose();
    for p in points {
        let q = t * p;
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let e = hi - lo;
    Candidate {
        volume: e.x * e.y * e.z,
        axes,
        lo,
        hi,
    }
}

fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
fn hull_2d(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Direction (unit 2-vector) of the minimum-area enclosing rectangle.
fn min_area_direction(poly: &[[f64; 2]]) -> [f64; 2] {
    let mut best = (f64::INFINITY, [1.0, 0.0]);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = (dx / len, dy / len);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in poly {
            let pu = p[0] * ux + p[1] * uy;
            let pv = -p[0] * uy + p[1] * ux;
            lo_u = lo_u.min(pu);
            hi_u = hi_u.max(pu);
            lo_v = lo_v.min(pv);
            hi_v = hi_v.max(pv);
        }
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        if area < best.0 {
            best = (area, [ux, uy]);
        }
    }
    best.1
}

/// Approximate minimum-volume box around a point set.
pub fn min_volume_obb_points(points: &[Vec3]) -> Result<OrientedBox> {
    let hull = convex_hull(points)?;
    let hp: Vec<Vec3> = hull.vertices.iter().map(|&i| points[i]).collect();

    let mut best = fit_axes(&hp, Matrix3::identity());

    // Principal axes.
    let mean = hp.iter().sum::<Vec3>() / hp.len() as f64;
    let cov = hp
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix3<f64>>();
    let eig = SymmetricEigen::new(cov);
    let pca = fit_axes(&hp, eig.eigenvectors);
    if pca.volume < best.volume {
        best = pca;
    }

    let mut normals: Vec<Vec3> = Vec::with_capacity(hull.faces.len());
    for f in &hull.faces {
        let n = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let n = n / len;
        if normals.iter().any(|m| m.dot(&n).abs() > 1.0 - 1e-9) {
            continue;
        }
        normals.push(n);
    }
    for n in normals {
        let (u, v) = orthonormal_basis(&n);
        let poly = hull_2d(hp.iter().map(|p| [p.dot(&u), p.dot(&v)]).collect());
        if poly.len() < 3 {
            continue;
        }
        let d = min_area_direction(&poly);
        let a0 = u * d[0] + v * d[1];
        let a1 = n.cross(&a0);
        let c = fit_axes(&hp, Matrix3::from_columns(&[a0, a1, n]));
        if c.volume < best.volume {
            best = c;
        }
    }

    let ext = best.hi - best.lo;
    if ext.min() <= 0.0 {
        return Err(Error::Degenerate("bounding box has zero thickness".into()));
    }
    let local_center = 0.5 * (best.lo + best.hi);
    let center = best.axes * local_center;
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| ext[b].total_cmp(&ext[a]));
    let c0 = best.axes.column(idx[0]).into_owned();
    let c1 = best.axes.column(idx[1]).into_owned();
    let mut c2 = best.axes.column(idx[2]).into_owned();
    if c0.cross(&c1).dot(&c2) < 0.0 {
        c2 = -c2;
    }
    let rot = Matrix3::from_columns(&[c0, c1, c2]);
    Ok(OrientedBox {
        center,
        half_extents: [0.5 * ext[idx[0]], 0.5 * ext[idx[1]], 0.5 * ext[idx[2]]],
        rotation: UnitQuaternion::from_matrix(&rot),
    })
}

pub fn min_volume_obb(mesh: &TriMesh) -> Result<OrientedBox> {
    min_volume_obb_points(mesh.vertices())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::box_mesh;
    use crate::so3::rad;
    use approx::assert_relative_eq;

    #[test]
    fn axis_aligned_box() {
        let m = box_mesh([2.0, 1.0, 1.0]);
        let b = min_volume_obb(&m).unwrap();
        assert_relative_eq!(b.half_extents[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(b.half_extents[1], 0.5, epsilon = 1e-6);
        assert_relative_eq!(b.half_extents[2], 0.5, epsilon = 1e-6);
        // Longest axis maps to x up to sign.
        assert_relative_eq!(b.axes().column(0).x.abs(), 1.0, epsilon = 1e-9);
        assert!(b.center.norm() < 1e-9);
    }

    #[test]
    fn rotated_box_keeps_extents() {
        let m = box_mesh([2.0, 1.0, 1.0])
            .transform(&Pose::from_rotation(UnitQuaternion::rot_z(rad(37.0))));
        let b = min_volume_obb(&m).unwrap();
        assert_relative_eq!(b.half_extents[0], 1.0, epsilon = 1e-3);
        assert_relative_eq!(b.half_extents[1], 0.5, epsilon = 1e-3);
        assert_relative_eq!(b.half_extents[2], 0.5, epsilon = 1e-3);
    }

    #[test]
    fn box_mesh_round_trip() {
        let b = OrientedBox {
            center: Vec3::new(0.1, 0.2, 0.3),
            half_extents: [0.3, 0.2, 0.1],
            rotation: UnitQuaternion::rot_y(0.4),
        };
        let m = b.to_mesh();
        assert!(m.is_watertight());
        assert_relative_eq!(m.volume(), b.volume(), epsilon = 1e-12);
        let fit = min_volume_obb(&m).unwrap();
        for k in 0..3 {
            assert_relative_eq!(fit.half_extents[k], b.half_extents[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn planar_points_fail() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        assert!(min_volume_obb_points(&pts).is_err());
    }
}
