//! Incremental 3D convex hull.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::so3::Vec3;

/// Hull as indices into the input point slice; faces are wound
/// counter-clockwise seen from outside.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    pub faces: Vec<[usize; 3]>,
    pub vertices: Vec<usize>,
}

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3], interior: &Vec3) -> Face {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let mut n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n /= len;
        }
        let mut f = Face {
            v,
            normal: n,
            offset: n.dot(&a),
        };
        if f.distance(interior) > 0.0 {
            f.v.swap(1, 2);
            f.normal = -f.normal;
            f.offset = -f.offset;
        }
        f
    }

    fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

pub fn convex_hull(points: &[Vec3]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "convex hull needs at least 4 points, got {}",
            points.len()
        )));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let diameter = (hi - lo).norm();
    if diameter <= 0.0 || !diameter.is_finite() {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let eps = 1e-10 * diameter;

    // Initial tetrahedron from extreme points.
    let i0 = (0..points.len())
        .min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))
        .unwrap();
    let i1 = (0..points.len())
        .max_by(|&a, &b| {
            (points[a] - points[i0])
                .norm_squared()
                .total_cmp(&(points[b] - points[i0]).norm_squared())
        })
        .unwrap();
    let d01 = (points[i1] - points[i0]).normalize();
    let line_dist = |p: &Vec3| {
        let r = p - points[i0];
        (r - d01 * r.dot(&d01)).norm()
    };
    let i2 = (0..points.len())
        .max_by(|&a, &b| line_dist(&points[a]).total_cmp(&line_dist(&points[b])))
        .unwrap();
    if line_dist(&points[i2]) <= eps {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let n012 = (points[i1] - points[i0])
        .cross(&(points[i2] - points[i0]))
        .normalize();
    let plane_dist = |p: &Vec3| (p - points[i0]).dot(&n012).abs();
    let i3 = (0..points.len())
        .max_by(|&a, &b| plane_dist(&points[a]).total_cmp(&plane_dist(&points[b])))
        .unwrap();
    if plane_dist(&points[i3]) <= eps {
        return Err(Error::Degenerate("points are coplanar".into()));
    }

    let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    let mut faces: Vec<Face> = [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]]
        .into_iter()
        .map(|v| Face::new(points, v, &interior))
        .collect();

    // Farthest points first keeps the intermediate hulls small.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        (points[b] - interior)
            .norm_squared()
            .total_cmp(&(points[a] - interior).norm_squared())
    });

    let mut visible = Vec::new();
    for pi in order {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let p = points[pi];
        visible.clear();
        visible.extend(
            faces
                .iter()
                .enumerate()
                .filter(|(_, f)| f.distance(&p) > eps)
                .map(|(i, _)| i),
        );
        if visible.is_empty() {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                edges.insert((v[k], v[(k + 1) % 3]));
            }
        }
        let horizon: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(a, b)| !edges.contains(&(b, a)))
            .collect();
        let vis: HashSet<usize> = visible.iter().copied().collect();
        let mut kept: Vec<Face> = faces
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !vis.contains(i))
            .map(|(_, f)| f)
            .collect();
        for (a, b) in horizon {
            kept.push(Face::new(points, [a, b, pi], &interior));
        }
        faces = kept;
    }

    let mut verts: Vec<usize> = faces.iter().flat_map(|f| f.v).collect();
    verts.sort_unstable();
    verts.dedup();
    Ok(ConvexHull {
        faces: faces.into_iter().map(|f| f.v).collect(),
        vertices: verts,
    })
}
