//! Geometric stand-in for a learned estimator: exhaustive search over a
//! rotation grid followed by local refinement, scoring each candidate by
//! the Chamfer distance between centroid-aligned deprojected clouds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{check_pair, EstimateRequest, RotationEstimate, RotationEstimator};
use crate::clock::Stopwatch;
use crate::cloud::{chamfer, NearestIndex, PointCloud};
use crate::error::{Error, Result};
use crate::render::{deproject_camera_frame, CameraModel, DepthImage};
use crate::rng::{stream, KitRng};
use crate::so3::{rad, UnitQuaternion, Vec3};

const PHI: f64 = 1.618_033_988_749_895;
const MIN_REFINE_STEP_DEG: f64 = 0.5;
/// Depth step, in pixel footprints, above which neighbors count as a
/// different surface when estimating normals.
const JUMP_PIXELS: f64 = 8.0;
/// Cost charged for a moved point that faces away from the camera, in
/// squared pixel footprints at the cloud's depth.
const HIDDEN_PENALTY_PIXELS_SQ: f64 = 4.0;

/// The 62 rotation axes of icosahedral symmetry, as unit vectors in both
/// signs: 12 vertex, 20 face and 30 edge directions of an icosahedron.
pub(crate) fn icosahedral_directions() -> Vec<Vec3> {
    let mut dirs = Vec::with_capacity(62);
    let cyclic = |v: [f64; 3]| -> [Vec3; 3] {
        [
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[2], v[0], v[1]),
            Vec3::new(v[1], v[2], v[0]),
        ]
    };
    let signs = |a: f64, b: f64, c: f64| {
        let mut out = Vec::new();
        for sa in [1.0, -1.0] {
            for sb in [1.0, -1.0] {
                for sc in [1.0, -1.0] {
                    let v = [a * sa, b * sb, c * sc];
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    };
    // Vertices.
    for v in signs(0.0, 1.0, PHI) {
        dirs.extend(cyclic(v));
    }
    // Face centers (dodecahedron vertices).
    for v in signs(1.0, 1.0, 1.0) {
        dirs.push(Vec3::new(v[0], v[1], v[2]));
    }
    for v in signs(0.0, 1.0 / PHI, PHI) {
        dirs.extend(cyclic(v));
    }
    // Edge midpoints (icosidodecahedron vertices).
    for v in signs(0.0, 0.0, 1.0) {
        dirs.extend(cyclic(v));
    }
    for v in signs(0.5, 0.5 * PHI, 0.5 * PHI * PHI) {
        dirs.extend(cyclic(v));
    }
    dirs.iter().map(|d| d.normalize()).collect()
}

/// Identity plus every icosahedral axis at angles `step, 2 step, ...` up
/// to `max_angle` (radians).
pub fn grid_candidates(step: f64, max_angle: f64) -> Vec<UnitQuaternion> {
    let mut out = vec![UnitQuaternion::IDENTITY];
    let count = (max_angle / step + 1e-9).floor() as usize;
    for d in icosahedral_directions() {
        for k in 1..=count {
            out.push(UnitQuaternion::from_axis_angle(&d, k as f64 * step));
        }
    }
    out
}

/// Symmetric Chamfer distance between `candidate * (start - centroid)` and
/// `goal - centroid`.
pub fn brute_force_cost(
    candidate: &UnitQuaternion,
    cloud_start: &PointCloud,
    cloud_goal: &PointCloud,
) -> Result<f64> {
    let a = cloud_start.centered()?;
    let b = cloud_goal.centered()?;
    let rotated = PointCloud::new(a.points.iter().map(|p| candidate.apply(p)).collect());
    chamfer(&rotated, &b)
}

/// Centered clouds with static indices; a candidate is scored by querying
/// the goal index with rotated start points and the start index with
/// inversely rotated goal points, so no index is rebuilt per candidate.
struct Problem {
    a: PointCloud,
    b: PointCloud,
    ia: NearestIndex,
    ib: NearestIndex,
    visibility: Option<Visibility>,
}

/// Normals and centroids for back-face culling of moved points.
struct Visibility {
    na: Vec<Vec3>,
    nb: Vec<Vec3>,
    ca: Vec3,
    cb: Vec3,
    penalty: f64,
}

impl Problem {
    fn new(start: &PointCloud, goal: &PointCloud) -> Result<Self> {
        let a = start.centered()?;
        let b = goal.centered()?;
        let ia = NearestIndex::new(&a)?;
        let ib = NearestIndex::new(&b)?;
        Ok(Problem {
            a,
            b,
            ia,
            ib,
            visibility: None,
        })
    }

    fn cost(&self, q: &UnitQuaternion) -> f64 {
        let inv = q.inverse();
        match &self.visibility {
            None => {
                self.ib.mean_sq(self.a.points.iter().map(|p| q.apply(p)))
                    + self.ia.mean_sq(self.b.points.iter().map(|p| inv.apply(p)))
            }
            Some(v) => {
                let one_way = |pts: &[Vec3],
                               normals: &[Vec3],
                               r: &UnitQuaternion,
                               center: &Vec3,
                               index: &NearestIndex| {
                    let total: f64 = pts
                        .iter()
                        .zip(normals)
                        .map(|(p, n)| {
                            let moved = r.apply(p);
                            let view = -(moved + center);
                            if r.apply(n).dot(&view) > 0.0 {
                                index.nearest_sq(&moved)
                            } else {
                                v.penalty
                            }
                        })
                        .sum();
                    total / pts.len() as f64
                };
                one_way(&self.a.points, &v.na, q, &v.cb, &self.ib)
                    + one_way(&self.b.points, &v.nb, &inv, &v.ca, &self.ia)
            }
        }
    }
}

/// Camera-frame points of the foreground pixels with unit normals facing
/// the camera. Normals come from neighboring pixels on the same surface;
/// pixels without usable neighbors get the direction toward the camera.
pub(crate) fn oriented_points(image: &DepthImage, camera: &CameraModel) -> (PointCloud, Vec<Vec3>) {
    let (w, h) = (image.width(), image.height());
    let point = |u: u32, v: u32| -> Option<Vec3> {
        let d = image.get(u, v);
        (d > 0.0).then(|| camera.camera_point(u as f64, v as f64, d as f64))
    };
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let Some(p) = point(u, v) else { continue };
            let jump = JUMP_PIXELS * camera.pixel_footprint(-p.z);
            let near = |q: Option<Vec3>| q.filter(|q| (q.z - p.z).abs() < jump);
            let tangent = |fwd: Option<Vec3>, back: Option<Vec3>| match (near(fwd), near(back)) {
                (Some(f), _) => Some(f - p),
                (None, Some(b)) => Some(p - b),
                _ => None,
            };
            let tu = tangent(
                (u + 1 < w).then(|| point(u + 1, v)).flatten(),
                u.checked_sub(1).and_then(|x| point(x, v)),
            );
            let tv = tangent(
                (v + 1 < h).then(|| point(u, v + 1)).flatten(),
                v.checked_sub(1).and_then(|y| point(u, y)),
            );
            let toward = -p.normalize();
            let n = match (tu, tv) {
                (Some(a), Some(b)) => {
                    let n = a.cross(&b);
                    let len = n.norm();
                    if len > 0.0 {
                        let n = n / len;
                        if n.dot(&toward) < 0.0 {
                            -n
                        } else {
                            n
                        }
                    } else {
                        toward
                    }
                }
                _ => toward,
            };
            points.push(p);
            normals.push(n);
        }
    }
    (PointCloud::new(points), normals)
}

/// Search bookkeeping for tests and diagnostics.
#[derive(Debug, Clone)]
pub struct BruteForceTrace {
    pub grid: Vec<(UnitQuaternion, f64)>,
    pub best: UnitQuaternion,
    pub best_cost: f64,
    pub evaluations: usize,
}

pub struct BruteForce {
    step: f64,
    refine_iters: u32,
    max_points: usize,
    visibility: bool,
    candidates: Vec<UnitQuaternion>,
    rng: KitRng,
}

impl BruteForce {
    pub fn new(
        grid_step_deg: f64,
        refine_iters: u32,
        max_angle_deg: f64,
        max_points: usize,
        seed: u64,
    ) -> Result<Self> {
        super::EstimatorSpec::BruteForce {
            grid_step_deg,
            refine_iters,
            max_angle_deg,
            max_points,
            visibility: true,
        }
        .validate()?;
        Ok(BruteForce {
            step: rad(grid_step_deg),
            refine_iters,
            max_points,
            visibility: true,
            candidates: grid_candidates(rad(grid_step_deg), rad(max_angle_deg)),
            rng: stream(seed, "brute-force"),
        })
    }

    /// Selects the cost used by [`RotationEstimator::estimate`]: the
    /// visibility-aware one (the default) or plain Chamfer.
    pub fn with_visibility(mut self, visibility: bool) -> Self {
        self.visibility = visibility;
        self
    }

    /// Best rotation taking `start` onto `goal` (both in the camera frame).
    pub fn search(&self, start: &PointCloud, goal: &PointCloud) -> Result<BruteForceTrace> {
        Ok(self.run(&Problem::new(start, goal)?))
    }

    /// Like [`Self::search`], but moved points whose normal turns away from
    /// the camera are charged a fixed penalty instead of being matched.
    /// Clouds and normals are in the camera frame.
    pub fn search_visible(
        &self,
        start: &PointCloud,
        start_normals: &[Vec3],
        goal: &PointCloud,
        goal_normals: &[Vec3],
        camera: &CameraModel,
    ) -> Result<BruteForceTrace> {
        if start_normals.len() != start.len() || goal_normals.len() != goal.len() {
            return Err(Error::InvalidArgument(
                "one normal per point required".into(),
            ));
        }
        let mut problem = Problem::new(start, goal)?;
        let ca = start.centroid()?;
        let cb = goal.centroid()?;
        let px = camera.pixel_footprint(0.5 * (ca.z + cb.z).abs());
        problem.visibility = Some(Visibility {
            na: start_normals.to_vec(),
            nb: goal_normals.to_vec(),
            ca,
            cb,
            penalty: HIDDEN_PENALTY_PIXELS_SQ * px * px,
        });
        Ok(self.run(&problem))
    }

    fn run(&self, problem: &Problem) -> BruteForceTrace {
        let score = |q: &UnitQuaternion| (*q, problem.cost(q));
        #[cfg(feature = "parallel")]
        let grid: Vec<(UnitQuaternion, f64)> = self.candidates.par_iter().map(score).collect();
        #[cfg(not(feature = "parallel"))]
        let grid: Vec<(UnitQuaternion, f64)> = self.candidates.iter().map(score).collect();

        let (mut best, mut best_cost) =
            grid.iter()
                .copied()
                .fold((UnitQuaternion::IDENTITY, f64::INFINITY), |acc, c| {
                    if c.1 < acc.1 {
                        c
                    } else {
                        acc
                    }
                });
        let mut evaluations = grid.len();

        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        let mut s = 0.5 * self.step;
        let floor = rad(MIN_REFINE_STEP_DEG);
        while s >= floor - 1e-12 {
            for _ in 0..self.refine_iters {
                let mut improved = false;
                for axis in &axes {
                    for sign in [1.0, -1.0] {
                        let q = UnitQuaternion::from_axis_angle(axis, sign * s).compose(&best);
                        let c = problem.cost(&q);
                        evaluations += 1;
                        if c < best_cost {
                            best = q;
                            best_cost = c;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            s *= 0.5;
        }
        BruteForceTrace {
            grid,
            best,
            best_cost,
            evaluations,
        }
    }
}

impl RotationEstimator for BruteForce {
    fn estimate(&mut self, req: &EstimateRequest<'_>) -> Result<RotationEstimate> {
        check_pair(req)?;
        let sw = Stopwatch::start();
        let best = if self.visibility {
            let mut sample = |img: &DepthImage| -> Result<(PointCloud, Vec<Vec3>)> {
                let (cloud, normals) = oriented_points(img, req.camera);
                if cloud.is_empty() {
                    return Err(Error::EmptyForeground);
                }
                let idx = cloud.farthest_point_indices(self.max_points, &mut self.rng);
                Ok((
                    PointCloud::new(idx.iter().map(|&i| cloud.points[i]).collect()),
                    idx.iter().map(|&i| normals[i]).collect(),
                ))
            };
            let (start, na) = sample(req.image_start)?;
            let (goal, nb) = sample(req.image_goal)?;
            self.search_visible(&start, &na, &goal, &nb, req.camera)?
                .best
        } else {
            let cloud = |img| -> Result<PointCloud> {
                let c = deproject_camera_frame(img, req.camera, None)?;
                if c.is_empty() {
                    return Err(Error::EmptyForeground);
                }
                Ok(c)
            };
            let start =
                cloud(req.image_start)?.farthest_point_subsample(self.max_points, &mut self.rng);
            let goal =
                cloud(req.image_goal)?.farthest_point_subsample(self.max_points, &mut self.rng);
            self.search(&start, &goal)?.best
        };
        Ok(RotationEstimate {
            rotation: best,
            confidence: None,
            latency: sw.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::so3::geodesic_angle;
    use rand::Rng;

    #[test]
    fn sixty_two_distinct_unit_axes() {
        let dirs = icosahedral_directions();
        assert_eq!(dirs.len(), 62);
        for (i, a) in dirs.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() < 1e-12);
            for b in &dirs[i + 1..] {
                assert!((a - b).norm() > 1e-6);
            }
            assert!(
                dirs.iter().any(|b| (a + b).norm() < 1e-12),
                "missing antipode"
            );
        }
        assert_eq!(grid_candidates(rad(10.0), rad(90.0)).len(), 1 + 62 * 9);
    }

    fn asymmetric_cloud() -> PointCloud {
        let mut rng = seeded(8);
        PointCloud::new(
            (0..400)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(0.0..0.12),
                        rng.random_range(0.0..0.05),
                        rng.random_range(0.0..0.02),
                    )
                })
                .chain((0..100).map(|i| Vec3::new(0.0, 0.05 + 0.0004 * i as f64, 0.01)))
                .collect(),
        )
    }

    #[test]
    fn cost_examples() {
        let a = asymmetric_cloud();
        assert_eq!(
            brute_force_cost(&UnitQuaternion::IDENTITY, &a, &a).unwrap(),
            0.0
        );
        let r = UnitQuaternion::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5).normalize(), rad(90.0));
        let moved = PointCloud::new(a.points.iter().map(|p| r.apply(p) + Vec3::x()).collect());
        assert!(brute_force_cost(&r, &a, &moved).unwrap() < 1e-9);
        assert!(
            brute_force_cost(&UnitQuaternion::IDENTITY, &a, &moved).unwrap()
                > brute_force_cost(&r, &a, &moved).unwrap()
        );
        assert!(matches!(
            brute_force_cost(&r, &PointCloud::default(), &a),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn static_index_cost_matches_direct_chamfer() {
        let a = asymmetric_cloud();
        let r = UnitQuaternion::rot_z(0.3);
        let b = PointCloud::new(a.points.iter().map(|p| r.apply(p)).collect());
        let problem = Problem::new(&a, &b).unwrap();
        let q = UnitQuaternion::rot_x(0.2);
        let direct = brute_force_cost(&q, &a, &b).unwrap();
        assert!((problem.cost(&q) - direct).abs() < 1e-12);
    }

    #[test]
    fn returned_cost_beats_every_grid_candidate() {
        let a = asymmetric_cloud();
        let r = UnitQuaternion::from_axis_angle(&Vec3::new(0.3, -1.0, 0.2).normalize(), rad(23.0));
        let b = PointCloud::new(a.points.iter().map(|p| r.apply(p)).collect());
        let bf = BruteForce::new(15.0, 4, 90.0, 2048, 1).unwrap();
        let trace = bf.search(&a, &b).unwrap();
        for (q, c) in &trace.grid {
            assert!(trace.best_cost <= *c);
            assert!((brute_force_cost(q, &a, &b).unwrap() - c).abs() < 1e-12);
        }
        assert!(geodesic_angle(&trace.best, &r) < rad(1.0));
    }
}
