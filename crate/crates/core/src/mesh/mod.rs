//! Triangle meshes: cleanup, rigid transforms, bounding boxes, containment
//! and uniform volume sampling.

mod bvh;
mod hull;
pub mod io;
mod obb;
pub mod primitives;

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::Rng;

pub use bvh::{Aabb, Bvh, Hit};
pub use hull::{convex_hull, ConvexHull};
pub use io::{load_mesh, parse_mesh, write_obj, MeshFormat};
pub use obb::{min_volume_obb, min_volume_obb_points, OrientedBox};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::so3::{Pose, Vec3};

/// Indexed triangle mesh in meters.
///
/// Immutable after construction. The BVH and bounding box are computed
/// lazily on first use and shared by every later query.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    name: Option<String>,
    watertight: bool,
    bvh: OnceLock<Bvh>,
    obb: OnceLock<Option<OrientedBox>>,
}

impl TriMesh {
    /// Validates indices, drops zero-area faces, prunes unreferenced
    /// vertices and records whether every edge is shared by two faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, name: Option<String>) -> Result<Self> {
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFiniteCoordinates);
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "face {fi} references vertex {bad} but only {} exist",
                    vertices.len()
                )));
            }
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let diag = if vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        };
        let area_eps = 1e-14 * diag * diag;

        let kept: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| {
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return false;
                }
                let [a, b, c] = f.map(|i| vertices[i as usize]);
                0.5 * (b - a).cross(&(c - a)).norm() > area_eps
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }

        let mut remap = vec![u32::MAX; vertices.len()];
        let mut new_vertices = Vec::new();
        let mut new_faces = Vec::with_capacity(kept.len());
        for f in kept {
            new_faces.push(f.map(|i| {
                let slot = &mut remap[i as usize];
                if *slot == u32::MAX {
                    *slot = new_vertices.len() as u32;
                    new_vertices.push(vertices[i as usize]);
                }
                *slot
            }));
        }
        let watertight = edge_manifold(&new_faces);
        Ok(TriMesh {
            vertices: new_vertices,
            faces: new_faces,
            name,
            watertight,
            bvh: OnceLock::new(),
            obb: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn bvh(&self) -> &Bvh {
        self.bvh
            .get_or_init(|| Bvh::build(&self.vertices, &self.faces))
    }

    pub fn aabb(&self) -> Aabb {
        self.bvh().bounds()
    }

    /// Cached minimum-volume box.
    pub fn obb(&self) -> Result<OrientedBox> {
        self.obb
            .get_or_init(|| min_volume_obb(self).ok())
            .ok_or_else(|| Error::Degenerate("vertex set is planar or collinear".into()))
    }

    /// Enclosed volume (absolute value of the signed divergence sum).
    pub fn volume(&self) -> f64 {
        self.signed_volume_moments().0.abs()
    }

    /// Center of mass of the enclosed solid; falls back to the vertex mean
    /// for open or flat meshes.
    pub fn centroid(&self) -> Vec3 {
        let (vol, moment) = self.signed_volume_moments();
        if vol.abs() > 1e-300 {
            moment / vol
        } else {
            self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
        }
    }

    fn signed_volume_moments(&self) -> (f64, Vec3) {
        let mut vol = 0.0;
        let mut moment = Vec3::zeros();
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let v = a.dot(&b.cross(&c)) / 6.0;
            vol += v;
            moment += v * (a + b + c) / 4.0;
        }
        (vol, moment)
    }

    /// Applies `v -> R v + t` to every vertex; topology is unchanged.
    pub fn transform(&self, pose: &Pose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            faces: self.faces.clone(),
            name: self.name.clone(),
            watertight: self.watertight,
            bvh: OnceLock::new(),
            obb: OnceLock::new(),
        }
    }

    /// Uniform scale about `center`.
    pub fn scaled_about(&self, factor: f64, center: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| center + (v - center) * factor)
                .collect(),
            faces: self.faces.clone(),
            name: self.name.clone(),
            watertight: self.watertight,
            bvh: OnceLock::new(),
            obb: OnceLock::new(),
        }
    }

    /// Same mesh translated so its volume centroid is at the origin.
    pub fn centered(&self) -> TriMesh {
        let c = self.centroid();
        self.transform(&Pose::from_translation(-c))
    }

    /// Point-in-solid test by ray parity.
    ///
    /// Rays leave along a fixed irrational direction; when a hit grazes an
    /// edge or vertex the ray is re-cast along the next direction of a fixed
    /// perturbation sequence.
    pub fn contains(&self, p: &Vec3) -> Result<bool> {
        if !self.watertight {
            return Err(Error::NotWatertight);
        }
        Ok(self.contains_unchecked(p))
    }

    pub(crate) fn contains_unchecked(&self, p: &Vec3) -> bool {
        let bounds = self.aabb();
        if (0..3).any(|k| p[k] < bounds.min[k] || p[k] > bounds.max[k]) {
            return false;
        }
        let bvh = self.bvh();
        let mut hits = Vec::new();
        let mut last = false;
        for dir in PARITY_DIRECTIONS.iter() {
            let d = Vec3::new(dir[0], dir[1], dir[2]);
            bvh.all_hits(&self.vertices, &self.faces, p, &d, 0.0, &mut hits);
            let crossings = hits.iter().filter(|h| h.t > 1e-12).count();
            last = crossings % 2 == 1;
            if !hits.iter().any(|h| h.ambiguous) {
                return last;
            }
        }
        last
    }

    /// `n` points uniform in the enclosed volume, by rejection from the
    /// minimum-volume bounding box.
    pub fn sample_volume_points<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<PointCloud> {
        if !self.watertight {
            return Err(Error::NotWatertight);
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "sample count must be at least 1".into(),
            ));
        }
        let obb = self.obb()?;
        let budget = n.saturating_mul(1000).saturating_add(100_000);
        let h = Vec3::from(obb.half_extents);
        let mut points = Vec::with_capacity(n);
        let mut attempts = 0;
        while points.len() < n {
            if attempts >= budget {
                return Err(Error::SamplingFailed {
                    attempts,
                    accepted: points.len(),
                    requested: n,
                });
            }
            attempts += 1;
            let local = Vec3::new(
                rng.random_range(-h.x..=h.x),
                rng.random_range(-h.y..=h.y),
                rng.random_range(-h.z..=h.z),
            );
            let p = obb.rotation.apply(&local) + obb.center;
            if self.contains_unchecked(&p) {
                points.push(p);
            }
        }
        Ok(PointCloud::new(points))
    }

    /// Minimum-volume box eccentricity: longest over shortest side, minus one.
    pub fn eccentricity(&self) -> Result<f64> {
        Ok(self.obb()?.eccentricity())
    }
}

/// Ray directions (not normalized): an irrational primary direction and its
/// fallbacks.
static PARITY_DIRECTIONS: [[f64; 3]; 6] = [
    [
        0.577_215_664_901_532_9,
        0.367_879_441_171_442_3,
        0.728_692_502_089_071_1,
    ],
    [
        -0.618_033_988_749_894_8,
        0.414_213_562_373_095_1,
        0.667_961_487_093_474_5,
    ],
    [
        0.312_847_605_184_731_6,
        -0.732_050_807_568_877_3,
        0.611_145_478_627_470_5,
    ],
    [
        0.681_374_920_563_118_4,
        0.523_598_775_598_298_8,
        -0.495_459_876_112_032_4,
    ],
    [
        -0.271_828_182_845_904_5,
        -0.707_106_781_186_547_5,
        -0.652_767_032_327_457_1,
    ],
    [
        0.840_896_415_253_714_5,
        -0.173_205_080_756_887_7,
        -0.512_747_863_425_185_2,
    ],
];

fn edge_manifold(faces: &[[u32; 3]]) -> bool {
    let mut counts: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3 / 2);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    counts.values().all(|&c| c == 2)
}

/// Free-function form of [`TriMesh::transform`].
pub fn transform(mesh: &TriMesh, pose: &Pose) -> TriMesh {
    mesh.transform(pose)
}

pub fn eccentricity(mesh: &TriMesh) -> Result<f64> {
    mesh.eccentricity()
}

pub fn contains(mesh: &TriMesh, p: &Vec3) -> Result<bool> {
    mesh.contains(p)
}

pub fn sample_volume_points<R: Rng + ?Sized>(
    mesh: &TriMesh,
    n: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    mesh.sample_volume_points(n, rng)
}
