//! The kitting controller: iterative slerp-based reorientation, centroid
//! translation, and goal-image construction for each cavity kind.
//!
//! The object mesh is kept centered on its centroid, so an object pose is a
//! world rotation `R` plus the world position of the centroid. Rotations
//! estimated in the camera-aligned frame are applied about the centroid.
//!
//! Conformal cavities are observed as a positive mass flipped by 180
//! degrees toward the camera. The object is aligned with that flipped mass
//! and flipped back before insertion, which amounts to pre-composing the
//! goal with the flip `F` and undoing it on the final rotation.

use log::warn;
use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::estimator::{self, EstimateRequest, EstimatorSpec, RotationEstimator};
use crate::eval::{baseline_2d, baseline_random, percent_fit, FitResult};
use crate::mesh::TriMesh;
use crate::render::{
    deproject, project_cloud, render_impression, render_scene, segment_workspace, CameraModel,
    DepthImage, Placed,
};
use crate::rng::{stream, KitRng};
use crate::so3::{deg, geodesic_angle, rad, sample_uniform, slerp, Pose, UnitQuaternion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Fraction of each estimated rotation that is applied.
    pub eta: f64,
    /// Stop once the estimated rotation is smaller than this, degrees.
    pub delta_deg: f64,
    pub max_iters: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            eta: 0.8,
            delta_deg: 5.0,
            max_iters: 8,
        }
    }
}

impl ControllerConfig {
    /// Slow, fine-grained settings of the earlier single-object controller.
    pub fn legacy() -> Self {
        ControllerConfig {
            eta: 0.2,
            delta_deg: 0.5,
            max_iters: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.is_nan()
            || self.eta <= 0.0
            || self.eta > 1.0
            || self.delta_deg.is_nan()
            || self.delta_deg <= 0.0
            || self.max_iters < 1
        {
            return Err(Error::Config(format!("invalid controller config {self:?}")));
        }
        Ok(())
    }
}

/// Geometry of the simulated cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// World height of the held object's centroid, meters.
    pub hold_height: f64,
    /// Vertical distance the object is lowered into the cavity, meters.
    pub insertion_drop: f64,
    /// World height of the workspace plane.
    pub plane_z: f64,
    pub segment_slack: f64,
    /// Half-range of the random horizontal cavity offset, meters.
    pub goal_offset_range: f64,
    /// Conformal cavities are the object scaled by this factor.
    pub cavity_scale: f64,
    pub fit_samples: usize,
    pub success_threshold: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            hold_height: 0.3,
            insertion_drop: 0.2,
            plane_z: 0.0,
            segment_slack: 0.002,
            goal_offset_range: 0.05,
            cavity_scale: 1.15,
            fit_samples: 10_000,
            success_threshold: 0.95,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.insertion_drop >= 0.0
            && self.segment_slack >= 0.0
            && self.goal_offset_range >= 0.0
            && self.cavity_scale >= 1.0
            && self.fit_samples >= 1
            && (0.0..=1.0).contains(&self.success_threshold)
            && self.hold_height - self.insertion_drop > self.plane_z;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scene config {self:?}")))
        }
    }

    pub fn hold_position(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.hold_height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CavityKind {
    Prismatic,
    ConvexConformal,
    ConcaveConformal,
}

impl CavityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CavityKind::Prismatic => "PRISMATIC",
            CavityKind::ConvexConformal => "CONVEX_CONFORMAL",
            CavityKind::ConcaveConformal => "CONCAVE_CONFORMAL",
        }
    }
}

/// How the object is reoriented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "method",
    rename_all = "SCREAMING_SNAKE_CASE",
    deny_unknown_fields
)]
pub enum Method {
    /// Iterative controller driven by a rotation estimator.
    Controller { estimator: EstimatorSpec },
    /// Planar Chamfer search over rotations about the vertical axis.
    #[serde(rename = "BASELINE_2D")]
    Baseline2d,
    /// Correct rotation angle about a random axis.
    BaselineRandom,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Controller { estimator } => format!("controller/{}", estimator.label()),
            Method::Baseline2d => "baseline_2d".into(),
            Method::BaselineRandom => "baseline_random".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Threshold,
    IterLimit,
    /// Baselines apply one rotation and stop.
    SingleShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub iteration: usize,
    /// Estimated relative rotation, camera-aligned frame.
    pub estimate: UnitQuaternion,
    /// Rotation applied after this estimate (identity on the terminating
    /// step).
    pub applied: UnitQuaternion,
    /// True remaining rotation before applying, degrees.
    pub residual_true_angle: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_id: String,
    pub object: String,
    pub cavity_kind: CavityKind,
    pub method: String,
    pub init_angle_deg: f64,
    pub steps: Vec<Step>,
    pub terminated_by: Option<Termination>,
    pub translation_applied: Vec3,
    /// Fraction of the object inside the cavity at the final pose.
    pub percent_fit: Option<f64>,
    pub fit: Option<FitResult>,
    /// Fraction inside with the final rotation but the exact goal position.
    pub rotation_fit: Option<f64>,
    /// Angle between final and goal rotation, degrees.
    pub final_rotation_error_deg: Option<f64>,
    pub success: bool,
    pub wall_time: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl TrialReport {
    /// Rotations actually applied (the terminating step applies none).
    pub fn applied_steps(&self) -> usize {
        match self.terminated_by {
            Some(Termination::Threshold) => self.steps.len().saturating_sub(1),
            _ => self.steps.len(),
        }
    }
}

/// A fully specified kitting scenario.
#[derive(Debug, Clone)]
pub struct KittingTrial {
    pub trial_id: String,
    pub object_name: String,
    /// Object geometry centered on its centroid.
    pub object_mesh: TriMesh,
    /// Cavity geometry in the object's goal frame.
    pub cavity_mesh: TriMesh,
    pub cavity_kind: CavityKind,
    /// Object rotation and centroid position that count as kitted.
    pub goal: Pose,
    /// Start rotation is `initial_perturbation * target`, where the target
    /// is the goal rotation as seen in the goal image.
    pub initial_perturbation: UnitQuaternion,
    pub camera: CameraModel,
    pub method: Method,
    pub config: ControllerConfig,
    pub scene: SceneConfig,
    pub seed: u64,
}

/// Cavity mesh in the object frame for `kind`.
pub fn make_cavity(object_centered: &TriMesh, kind: CavityKind, scale: f64) -> Result<TriMesh> {
    Ok(match kind {
        CavityKind::Prismatic => {
            let b = object_centered.obb()?;
            b.to_mesh()
        }
        CavityKind::ConvexConformal | CavityKind::ConcaveConformal => {
            object_centered.scaled_about(scale, &Vec3::zeros())
        }
    })
}

/// Random goal pose: a random horizontal cavity offset at insertion depth.
/// Prismatic goals rest the bounding box flat with a random yaw; conformal
/// goals use a uniformly random rotation.
pub fn sample_goal<R: Rng + ?Sized>(
    object_centered: &TriMesh,
    kind: CavityKind,
    scene: &SceneConfig,
    rng: &mut R,
) -> Result<Pose> {
    let r = scene.goal_offset_range;
    let (gx, gy) = if r > 0.0 {
        (rng.random_range(-r..=r), rng.random_range(-r..=r))
    } else {
        (0.0, 0.0)
    };
    let rotation = match kind {
        CavityKind::Prismatic => {
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            UnitQuaternion::rot_z(yaw).compose(&object_centered.obb()?.rotation.inverse())
        }
        _ => sample_uniform(rng),
    };
    Ok(Pose::new(
        rotation,
        Vec3::new(gx, gy, scene.hold_height - scene.insertion_drop),
    ))
}

impl KittingTrial {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        trial_id: impl Into<String>,
        object_mesh: &TriMesh,
        cavity_kind: CavityKind,
        goal: Pose,
        initial_perturbation: UnitQuaternion,
        camera: CameraModel,
        method: Method,
        config: ControllerConfig,
        scene: SceneConfig,
        seed: u64,
    ) -> Result<Self> {
        let object = object_mesh.centered();
        if !object.is_watertight() {
            return Err(Error::NotWatertight);
        }
        let cavity_mesh = make_cavity(&object, cavity_kind, scene.cavity_scale)?;
        Ok(KittingTrial {
            trial_id: trial_id.into(),
            object_name: object_mesh.name().unwrap_or("object").to_string(),
            object_mesh: object,
            cavity_mesh,
            cavity_kind,
            goal,
            initial_perturbation: initial_perturbation.canonicalize(),
            camera,
            method,
            config,
            scene,
            seed,
        })
    }

    fn plane_depth(&self) -> f64 {
        self.camera.plane_depth(self.scene.plane_z)
    }

    /// Segmented depth image of the held object at world rotation `r`.
    pub fn observe_object(&self, r: &UnitQuaternion) -> Result<DepthImage> {
        let pose = Pose::new(*r, self.scene.hold_position());
        let img = render_scene(
            &[Placed {
                mesh: &self.object_mesh,
                pose,
            }],
            Some(self.scene.plane_z),
            &self.camera,
        );
        img.masked(&segment_workspace(
            &img,
            self.plane_depth(),
            self.scene.segment_slack,
        ))
    }
}

/// Goal image plus the rotation it depicts.
#[derive(Debug, Clone)]
pub struct GoalView {
    /// Segmented goal image `I^g`.
    pub image: DepthImage,
    /// Flip relating the goal image to the kitted orientation.
    pub flip: UnitQuaternion,
    /// Object rotation the goal image depicts: `flip * goal.rotation`.
    pub target: UnitQuaternion,
    pub warnings: Vec<String>,
}

/// Builds `I^g` for the trial's cavity kind. The cavity mass is imaged at
/// the hold height above the cavity, the same distance as the held object.
pub fn goal_view(trial: &KittingTrial) -> Result<GoalView> {
    let scene = &trial.scene;
    let cam = &trial.camera;
    let raised = trial.goal.translation + Vec3::new(0.0, 0.0, scene.insertion_drop);
    let plane_depth = trial.plane_depth();
    let mask_plane = |img: DepthImage| -> Result<DepthImage> {
        img.masked(&segment_workspace(&img, plane_depth, scene.segment_slack))
    };
    let mut warnings = Vec::new();
    let (image, flip) = match trial.cavity_kind {
        CavityKind::Prismatic => {
            let pose = Pose::new(trial.goal.rotation, raised);
            let img = render_scene(
                &[Placed {
                    mesh: &trial.cavity_mesh,
                    pose,
                }],
                Some(scene.plane_z),
                cam,
            );
            (mask_plane(img)?, UnitQuaternion::IDENTITY)
        }
        CavityKind::ConvexConformal => {
            let flip = UnitQuaternion::rot_x(std::f64::consts::PI);
            let pose = Pose::new(flip.compose(&trial.goal.rotation), raised);
            let img = render_scene(
                &[Placed {
                    mesh: &trial.cavity_mesh,
                    pose,
                }],
                Some(scene.plane_z),
                cam,
            );
            (mask_plane(img)?, flip)
        }
        CavityKind::ConcaveConformal => {
            let top = trial
                .cavity_mesh
                .vertices()
                .iter()
                .map(|v| trial.goal.apply(v).z)
                .fold(f64::NEG_INFINITY, f64::max);
            let surface_z = top - 1e-6;
            let imp = render_impression(&trial.cavity_mesh, &trial.goal, surface_z, cam)?;
            let surface_depth = cam.plane_depth(surface_z);
            let synth = synthesize_concave_goal(&imp, cam, surface_depth, scene.segment_slack)?;
            if synth.fallback_axis {
                warnings
                    .push("isotropic cavity footprint; flipping about the camera x-axis".into());
            }
            (
                synth.image,
                UnitQuaternion::from_axis_angle(&synth.axis, std::f64::consts::PI),
            )
        }
    };
    if image.foreground_count() == 0 {
        return Err(Error::EmptyForeground);
    }
    Ok(GoalView {
        image,
        flip,
        target: flip.compose(&trial.goal.rotation),
        warnings,
    })
}

/// Result of the rotation phase.
#[derive(Debug)]
pub struct LoopOutcome {
    pub steps: Vec<Step>,
    pub terminated_by: Option<Termination>,
    pub final_rotation: UnitQuaternion,
    pub error: Option<Error>,
}

/// Estimate, stop if the estimate is below `delta`, otherwise apply
/// `slerp(I, estimate, eta)` about the centroid; at most `max_iters`
/// estimates. `observe` renders the start image for a world rotation.
#[allow(clippy::too_many_arguments)]
pub fn rotation_loop(
    estimator: &mut dyn RotationEstimator,
    observe: &mut dyn FnMut(&UnitQuaternion) -> Result<DepthImage>,
    goal_image: &DepthImage,
    camera: &CameraModel,
    start: UnitQuaternion,
    target: UnitQuaternion,
    config: &ControllerConfig,
) -> LoopOutcome {
    let cam_rot = camera.pose.rotation;
    let to_camera = |q: &UnitQuaternion| cam_rot.inverse().compose(q).compose(&cam_rot);
    let to_world = |q: &UnitQuaternion| cam_rot.compose(q).compose(&cam_rot.inverse());
    let delta = rad(config.delta_deg);
    let mut r = start;
    let mut steps = Vec::new();
    for iteration in 0..config.max_iters {
        let img = match observe(&r) {
            Ok(img) => img,
            Err(e) => {
                return LoopOutcome {
                    steps,
                    terminated_by: None,
                    final_rotation: r,
                    error: Some(e),
                }
            }
        };
        let truth = to_camera(&target.compose(&r.inverse()));
        let sw = Stopwatch::start();
        let est = estimator.estimate(&EstimateRequest {
            image_start: &img,
            image_goal: goal_image,
            camera,
            context: Some(truth),
        });
        let latency = sw.elapsed();
        let est = match est {
            Ok(e) => e.rotation,
            Err(e) => {
                return LoopOutcome {
                    steps,
                    terminated_by: None,
                    final_rotation: r,
                    error: Some(e),
                }
            }
        };
        let residual_true_angle = deg(geodesic_angle(&r, &target));
        if est.angle() < delta {
            steps.push(Step {
                iteration,
                estimate: est,
                applied: UnitQuaternion::IDENTITY,
                residual_true_angle,
                latency,
            });
            return LoopOutcome {
                steps,
                terminated_by: Some(Termination::Threshold),
                final_rotation: r,
                error: None,
            };
        }
        let applied = slerp(&UnitQuaternion::IDENTITY, &est, config.eta);
        r = to_world(&applied).compose(&r);
        steps.push(Step {
            iteration,
            estimate: est,
            applied,
            residual_true_angle,
            latency,
        });
    }
    LoopOutcome {
        steps,
        terminated_by: Some(Termination::IterLimit),
        final_rotation: r,
        error: None,
    }
}

/// Horizontal centroid offset from the object's segmented cloud to the
/// cavity's, with the vertical component set to `-drop`.
pub fn translation_step(
    image_object: &DepthImage,
    image_cavity: &DepthImage,
    camera: &CameraModel,
    plane_depth: f64,
    slack: f64,
    drop: f64,
) -> Result<Vec3> {
    let centroid = |img: &DepthImage| -> Result<Vec3> {
        let mask = segment_workspace(img, plane_depth, slack);
        let cloud = deproject(img, camera, Some(&mask))?;
        if cloud.is_empty() {
            return Err(Error::EmptyForeground);
        }
        cloud.centroid()
    };
    let d = centroid(image_cavity)? - centroid(image_object)?;
    Ok(Vec3::new(d.x, d.y, -drop))
}

/// Synthesized convex goal image and the flip that produced it.
#[derive(Debug, Clone)]
pub struct ConcaveGoal {
    pub image: DepthImage,
    /// Horizontal unit axis of the 180 degree flip.
    pub axis: Vec3,
    /// Center of mass of the segmented cavity cloud.
    pub center: Vec3,
    /// The footprint was too isotropic to define a principal axis.
    pub fallback_axis: bool,
}

const ISOTROPY_TOLERANCE: f64 = 0.05;

/// Flips the segmented impression 180 degrees about the horizontal
/// principal axis through its center of mass and reprojects it with a
/// z-buffer. Single-pixel gaps left by the splat are filled with the median
/// of their nonzero neighbors when at least five of the eight are set.
pub fn synthesize_concave_goal(
    image_cavity: &DepthImage,
    camera: &CameraModel,
    plane_depth: f64,
    slack: f64,
) -> Result<ConcaveGoal> {
    let mask = segment_workspace(image_cavity, plane_depth, slack);
    let cloud = deproject(image_cavity, camera, Some(&mask))?;
    if cloud.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let center = cloud.centroid()?;
    let cov = cloud.covariance()?;
    let h = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    let eig = SymmetricEigen::new(h);
    let (hi, lo) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let (l_hi, l_lo) = (eig.eigenvalues[hi], eig.eigenvalues[lo]);
    let fallback_axis = l_hi - l_lo <= ISOTROPY_TOLERANCE * (l_hi + l_lo) || l_hi.is_nan();
    let mut axis = if fallback_axis {
        warn!("isotropic cavity footprint, flipping about the camera x-axis");
        let x = camera.pose.rotation.apply(&Vec3::x());
        let flat = Vec3::new(x.x, x.y, 0.0);
        if flat.norm() > 1e-9 {
            flat.normalize()
        } else {
            Vec3::x()
        }
    } else {
        let v = eig.eigenvectors.column(hi);
        Vec3::new(v[0], v[1], 0.0).normalize()
    };
    if axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0) {
        axis = -axis;
    }
    let flip = UnitQuaternion::from_axis_angle(&axis, std::f64::consts::PI);
    let flipped = cloud.rotated_about(&flip, &center);
    let splat = project_cloud(&flipped, camera);
    Ok(ConcaveGoal {
        image: fill_small_holes(&splat),
        axis,
        center,
        fallback_axis,
    })
}

fn fill_small_holes(img: &DepthImage) -> DepthImage {
    let mut out = img.clone();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut vals = Vec::with_capacity(8);
    for v in 0..h {
        for u in 0..w {
            if img.get(u as u32, v as u32) > 0.0 {
                continue;
            }
            vals.clear();
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (x, y) = (u + du, v + dv);
                    if (du, dv) == (0, 0) || x < 0 || y < 0 || x >= w || y >= h {
                        continue;
                    }
                    let d = img.get(x as u32, y as u32);
                    if d > 0.0 {
                        vals.push(d);
                    }
                }
            }
            if vals.len() >= 5 {
                vals.sort_by(f32::total_cmp);
                let n = vals.len();
                let med = if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    0.5 * (vals[n / 2 - 1] + vals[n / 2])
                };
                out.set(u as u32, v as u32, med);
            }
        }
    }
    out
}

fn empty_report(trial: &KittingTrial) -> TrialReport {
    TrialReport {
        trial_id: trial.trial_id.clone(),
        object: trial.object_name.clone(),
        cavity_kind: trial.cavity_kind,
        method: trial.method.label(),
        init_angle_deg: deg(trial.initial_perturbation.angle()),
        steps: Vec::new(),
        terminated_by: None,
        translation_applied: Vec3::zeros(),
        percent_fit: None,
        fit: None,
        rotation_fit: None,
        final_rotation_error_deg: None,
        success: false,
        wall_time: 0.0,
        warnings: Vec::new(),
        error: None,
    }
}

/// Runs one trial end to end. Failures after setup (estimator errors, empty
/// observations) are recorded in the report rather than returned.
pub fn run_trial(trial: &KittingTrial) -> Result<TrialReport> {
    trial.config.validate()?;
    trial.scene.validate()?;
    trial.camera.validate()?;
    let sw = Stopwatch::start();
    let mut report = empty_report(trial);
    let outcome = run_inner(trial, &mut report);
    if let Err(e) = outcome {
        report.error = Some(e.to_string());
        report.success = false;
    }
    report.wall_time = sw.elapsed();
    Ok(report)
}

fn run_inner(trial: &KittingTrial, report: &mut TrialReport) -> Result<()> {
    let scene = &trial.scene;
    let goal = goal_view(trial)?;
    report.warnings.extend(goal.warnings.iter().cloned());
    let start = trial.initial_perturbation.compose(&goal.target);
    let mut rng: KitRng = stream(trial.seed, &format!("{}/method", trial.trial_id));
    let plane_depth = trial.plane_depth();

    let end_rotation = match &trial.method {
        Method::Controller { estimator: spec } => {
            let mut est = estimator::build(spec, rng.random())?;
            let mut observe = |r: &UnitQuaternion| {
                let img = trial.observe_object(r)?;
                if img.foreground_count() == 0 {
                    return Err(Error::EmptyForeground);
                }
                Ok(img)
            };
            let outcome = rotation_loop(
                est.as_mut(),
                &mut observe,
                &goal.image,
                &trial.camera,
                start,
                goal.target,
                &trial.config,
            );
            report.steps = outcome.steps;
            report.terminated_by = outcome.terminated_by;
            if let Some(e) = outcome.error {
                return Err(e);
            }
            outcome.final_rotation
        }
        Method::Baseline2d => {
            let img = trial.observe_object(&start)?;
            let align = baseline_2d(&img, &goal.image, &trial.camera, plane_depth)?;
            report.steps.push(Step {
                iteration: 0,
                estimate: align.rotation,
                applied: align.rotation,
                residual_true_angle: deg(geodesic_angle(&start, &goal.target)),
                latency: 0.0,
            });
            report.terminated_by = Some(Termination::SingleShot);
            align.rotation.compose(&start)
        }
        Method::BaselineRandom => {
            let needed = goal.target.compose(&start.inverse());
            let applied = baseline_random(&needed, &mut rng);
            report.steps.push(Step {
                iteration: 0,
                estimate: applied,
                applied,
                residual_true_angle: deg(geodesic_angle(&start, &goal.target)),
                latency: 0.0,
            });
            report.terminated_by = Some(Termination::SingleShot);
            applied.compose(&start)
        }
    };

    let final_image = trial.observe_object(&end_rotation)?;
    let t = translation_step(
        &final_image,
        &goal.image,
        &trial.camera,
        plane_depth,
        scene.segment_slack,
        scene.insertion_drop,
    )?;
    report.translation_applied = t;

    let final_rotation = goal.flip.inverse().compose(&end_rotation);
    report.final_rotation_error_deg =
        Some(deg(geodesic_angle(&final_rotation, &trial.goal.rotation)));
    let final_pose = Pose::new(final_rotation, scene.hold_position() + t);
    let mut fit_rng = stream(trial.seed, &format!("{}/fit", trial.trial_id));
    let fit = percent_fit(
        &trial.object_mesh,
        &final_pose,
        &trial.cavity_mesh,
        &trial.goal,
        scene.fit_samples,
        &mut fit_rng,
    )?;
    let mut fit_rng = stream(trial.seed, &format!("{}/fit", trial.trial_id));
    let rot_fit = percent_fit(
        &trial.object_mesh,
        &Pose::new(final_rotation, trial.goal.translation),
        &trial.cavity_mesh,
        &trial.goal,
        scene.fit_samples,
        &mut fit_rng,
    )?;
    report.percent_fit = Some(fit.kappa_hat);
    report.fit = Some(fit);
    report.rotation_fit = Some(rot_fit.kappa_hat);
    report.success = fit.kappa_hat >= scene.success_threshold;
    Ok(())
}
