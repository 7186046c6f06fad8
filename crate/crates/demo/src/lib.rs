//! Browser bindings: depth rendering at a chosen rotation, a controller
//! residual trace, and fit against rotation error.

use kitting::controller::{
    make_cavity, run_trial, sample_goal, CavityKind, ControllerConfig, KittingTrial, Method,
    SceneConfig,
};
use kitting::corpus::builtin_corpus;
use kitting::estimator::EstimatorSpec;
use kitting::eval::percent_fit;
use kitting::render::render_depth;
use kitting::rng::stream;
use kitting::so3::{rad, sample_with_angle, Pose, UnitQuaternion, Vec3};
use kitting::{CameraModel, TriMesh};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn mesh(id: &str) -> Result<TriMesh, String> {
    builtin_corpus()
        .into_iter()
        .find(|(i, _)| i == id)
        .map(|(_, m)| m)
        .ok_or_else(|| format!("unknown mesh {id}"))
}

fn kind(name: &str) -> Result<CavityKind, String> {
    match name {
        "PRISMATIC" => Ok(CavityKind::Prismatic),
        "CONVEX_CONFORMAL" => Ok(CavityKind::ConvexConformal),
        "CONCAVE_CONFORMAL" => Ok(CavityKind::ConcaveConformal),
        other => Err(format!("unknown cavity kind {other}")),
    }
}

fn estimator(name: &str) -> Result<EstimatorSpec, String> {
    match name {
        "perfect" => Ok(EstimatorSpec::Perfect),
        "noisy" => Ok(EstimatorSpec::NoisyOracle { sigma_deg: 3.0 }),
        "brute" => Ok(EstimatorSpec::brute_force(10.0)),
        other => Err(format!("unknown estimator {other}")),
    }
}

/// JSON list of built-in mesh ids.
pub fn mesh_ids() -> String {
    let ids: Vec<String> = builtin_corpus().into_iter().map(|(id, _)| id).collect();
    json!(ids).to_string()
}

/// RGBA pixels of the default 128 x 128 camera viewing `mesh_id` rotated by
/// Euler angles (degrees, applied x then y then z) 0.3 m above the plane.
/// Nearer surfaces are brighter; background is black.
pub fn render_rgba(mesh_id: &str, rx: f64, ry: f64, rz: f64) -> Result<Vec<u8>, String> {
    let m = mesh(mesh_id)?;
    let q = UnitQuaternion::rot_z(rad(rz))
        .compose(&UnitQuaternion::rot_y(rad(ry)))
        .compose(&UnitQuaternion::rot_x(rad(rx)));
    let cam = CameraModel::default();
    let img = render_depth(&m, &Pose::new(q, Vec3::new(0.0, 0.0, 0.3)), &cam);
    let (near, far) = (0.35f32, 0.65f32);
    let mut out = Vec::with_capacity(img.data().len() * 4);
    for &d in img.data() {
        let g = if d > 0.0 {
            (255.0 * (1.0 - ((d - near) / (far - near)).clamp(0.0, 1.0)) * 0.85 + 38.0) as u8
        } else {
            0
        };
        out.extend_from_slice(&[g, g, g, 255]);
    }
    Ok(out)
}

/// One controller trial toward a random goal from `angle_deg` of random
/// perturbation. Returns
/// JSON with the true residual angle before each step, termination and fit.
pub fn controller_trace(
    mesh_id: &str,
    cavity_kind: &str,
    estimator_name: &str,
    angle_deg: f64,
    eta: f64,
    seed: u64,
) -> Result<String, String> {
    let m = mesh(mesh_id)?.centered();
    let cfg = ControllerConfig {
        eta,
        ..ControllerConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let scene = SceneConfig {
        fit_samples: 2000,
        ..SceneConfig::default()
    };
    let kind = kind(cavity_kind)?;
    let mut rng = stream(seed, "demo");
    let goal = sample_goal(&m, kind, &scene, &mut rng).map_err(|e| e.to_string())?;
    let perturbation = sample_with_angle(&mut rng, rad(angle_deg));
    let trial = KittingTrial::new(
        format!("{mesh_id}/demo"),
        &m,
        kind,
        goal,
        perturbation,
        CameraModel::default(),
        Method::Controller {
            estimator: estimator(estimator_name)?,
        },
        cfg,
        scene,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let r = run_trial(&trial).map_err(|e| e.to_string())?;
    let residuals: Vec<f64> = r.steps.iter().map(|s| s.residual_true_angle).collect();
    Ok(json!({
        "residuals_deg": residuals,
        "final_error_deg": r.final_rotation_error_deg,
        "terminated_by": r.terminated_by,
        "percent_fit": r.percent_fit,
        "success": r.success,
        "error": r.error,
    })
    .to_string())
}

/// Fit of the object placed at the cavity with rotation errors
/// `0, step, ..., max_deg` about one random axis. JSON list of
/// `[error_deg, fit]` pairs.
pub fn fit_curve(
    mesh_id: &str,
    cavity_kind: &str,
    max_deg: f64,
    step_deg: f64,
    seed: u64,
) -> Result<String, String> {
    if step_deg.is_nan() || step_deg <= 0.0 || !(0.0..=180.0).contains(&max_deg) {
        return Err("need step > 0 and max in [0, 180]".into());
    }
    let m = mesh(mesh_id)?.centered();
    let scene = SceneConfig::default();
    let cavity =
        make_cavity(&m, kind(cavity_kind)?, scene.cavity_scale).map_err(|e| e.to_string())?;
    let axis = sample_with_angle(&mut stream(seed, "axis"), 1.0)
        .axis_angle()
        .0;
    let mut points = Vec::new();
    let mut a = 0.0;
    while a <= max_deg + 1e-9 {
        let pose = Pose::from_rotation(UnitQuaternion::from_axis_angle(&axis, rad(a)));
        let fit = percent_fit(
            &m,
            &pose,
            &cavity,
            &Pose::identity(),
            2000,
            &mut stream(seed, "fit"),
        )
        .map_err(|e| e.to_string())?;
        points.push([a, fit.kappa_hat]);
        a += step_deg;
    }
    Ok(json!(points).to_string())
}

#[wasm_bindgen(js_name = meshIds)]
pub fn js_mesh_ids() -> String {
    mesh_ids()
}

#[wasm_bindgen(js_name = renderRgba)]
pub fn js_render_rgba(mesh_id: &str, rx: f64, ry: f64, rz: f64) -> Result<Vec<u8>, JsError> {
    render_rgba(mesh_id, rx, ry, rz).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = controllerTrace)]
pub fn js_controller_trace(
    mesh_id: &str,
    cavity_kind: &str,
    estimator_name: &str,
    angle_deg: f64,
    eta: f64,
    seed: u32,
) -> Result<String, JsError> {
    controller_trace(
        mesh_id,
        cavity_kind,
        estimator_name,
        angle_deg,
        eta,
        seed as u64,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fitCurve)]
pub fn js_fit_curve(
    mesh_id: &str,
    cavity_kind: &str,
    max_deg: f64,
    step_deg: f64,
    seed: u32,
) -> Result<String, JsError> {
    fit_curve(mesh_id, cavity_kind, max_deg, step_deg, seed as u64).map_err(|e| JsError::new(&e))
}
