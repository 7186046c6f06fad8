use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use kitting::estimator::wire::{encode_request, PROTOCOL_VERSION};
use kitting::estimator::{
    brute_force_cost, build, estimate, BruteForce, EstimateRequest, EstimatorSpec,
    ExternalEstimator, RotationEstimator,
};
use kitting::mesh::primitives::{extrude_polygon, l_outline};
use kitting::render::{deproject_camera_frame, render_depth};
use kitting::rng::stream;
use kitting::so3::{geodesic_angle, rad, sample_uniform, Pose, UnitQuaternion, Vec3};
use kitting::{CameraModel, DepthImage, Error, PointCloud};
use proptest::prelude::*;

/// Serves one connection: answers the handshake with `hello` and every
/// later line with `reply`, recording what it received.
fn stub_server(hello: &'static str, reply: &'static str) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let first = log.lock().unwrap().is_empty();
            log.lock().unwrap().push(line);
            let answer = if first { hello } else { reply };
            if out.write_all(format!("{answer}\n").as_bytes()).is_err() {
                break;
            }
        }
    });
    (format!("tcp://{addr}"), seen)
}

const HELLO: &str = r#"{"v":1,"raster":[16,12]}"#;
const QUARTER_TURN_Z: &str =
    r#"{"v":1,"quat_wxyz":[0.7071067811865476,0.0,0.0,0.7071067811865476],"confidence":0.5}"#;

fn small_camera() -> CameraModel {
    CameraModel::from_fov(
        16,
        12,
        45.0,
        Pose::from_translation(Vec3::new(0.0, 0.0, 0.8)),
    )
}

fn ramp(w: u32, h: u32, offset: f32) -> DepthImage {
    DepthImage::from_data(w, h, (0..w * h).map(|i| offset + i as f32 * 1e-3).collect()).unwrap()
}

#[test]
fn handshake_and_estimate_round_trip() {
    let (endpoint, seen) = stub_server(HELLO, QUARTER_TURN_Z);
    let mut est = ExternalEstimator::connect(&endpoint, 5.0, None).unwrap();
    assert_eq!(est.version(), PROTOCOL_VERSION);
    assert_eq!(est.raster(), [16, 12]);
    let cam = small_camera();
    let (s, g) = (ramp(16, 12, 0.5), ramp(16, 12, 0.6));
    let req = EstimateRequest {
        image_start: &s,
        image_goal: &g,
        camera: &cam,
        context: None,
    };
    let a = est.estimate(&req).unwrap();
    let b = est.estimate(&req).unwrap();
    assert!(a
        .rotation
        .approx_eq(&UnitQuaternion::rot_z(rad(90.0)), 1e-12));
    assert_eq!(a.confidence, Some(0.5));
    assert_eq!(a.rotation, b.rotation);
    let lines = seen.lock().unwrap().clone();
    assert_eq!(lines[0], r#"{"op":"hello"}"#);
    assert_eq!(lines[1], lines[2]);
    assert_eq!(lines[1], encode_request(&s, &g));
}

#[test]
fn wrong_greeting_is_a_protocol_error() {
    let (endpoint, _) = stub_server("KNDI ready", QUARTER_TURN_Z);
    assert!(matches!(
        ExternalEstimator::connect(&endpoint, 5.0, None),
        Err(Error::Protocol(_))
    ));
    let (endpoint, _) = stub_server(r#"{"v":2,"raster":[16,12]}"#, QUARTER_TURN_Z);
    assert!(matches!(
        ExternalEstimator::connect(&endpoint, 5.0, None),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn raster_size_mismatch_is_rejected_before_sending() {
    let (endpoint, seen) = stub_server(HELLO, QUARTER_TURN_Z);
    let mut est = ExternalEstimator::connect(&endpoint, 5.0, None).unwrap();
    let cam = CameraModel::default();
    let img = ramp(128, 128, 0.5);
    let err = est
        .estimate(&EstimateRequest {
            image_start: &img,
            image_goal: &img,
            camera: &cam,
            context: None,
        })
        .unwrap_err();
    assert!(matches!(
        err,
        Error::DimensionMismatch {
            expected_w: 16,
            expected_h: 12,
            got_w: 128,
            got_h: 128
        }
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn remote_errors_and_unreachable_servers() {
    let (endpoint, _) = stub_server(HELLO, r#"{"v":1,"error":"bad base64"}"#);
    let mut est = ExternalEstimator::connect(&endpoint, 5.0, None).unwrap();
    let cam = small_camera();
    let img = ramp(16, 12, 0.5);
    let req = EstimateRequest {
        image_start: &img,
        image_goal: &img,
        camera: &cam,
        context: None,
    };
    assert!(matches!(est.estimate(&req), Err(Error::Remote(m)) if m == "bad base64"));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let spec = EstimatorSpec::External {
        endpoint: format!("tcp://127.0.0.1:{port}"),
        timeout_s: 1.0,
        crop_margin: None,
    };
    assert!(matches!(build(&spec, 0), Err(Error::Transport(_))));
}

#[test]
fn l_bracket_twenty_degrees_about_z() {
    let cam = CameraModel::default();
    let mesh = extrude_polygon(&l_outline(0.12, 0.08, 0.03), 0.04).centered();
    let mut rng = stream(3, "l-bracket");
    for _ in 0..3 {
        let start = sample_uniform(&mut rng);
        let truth = UnitQuaternion::rot_z(rad(20.0));
        let at =
            |q: UnitQuaternion| render_depth(&mesh, &Pose::new(q, Vec3::new(0.0, 0.0, 0.3)), &cam);
        let s = at(start);
        let g = at(truth.compose(&start));
        let spec = EstimatorSpec::brute_force(5.0);
        let out = estimate(&spec, &s, &g, &cam, None, 1).unwrap();
        let err = geodesic_angle(&out.rotation, &truth);
        assert!(err < rad(5.0), "error {} deg", err.to_degrees());
    }
}

#[test]
fn empty_images_are_rejected() {
    let cam = CameraModel::default();
    let blank = DepthImage::zeros(cam.width, cam.height);
    let mut bf = BruteForce::new(15.0, 2, 90.0, 256, 0).unwrap();
    let r = bf.estimate(&EstimateRequest {
        image_start: &blank,
        image_goal: &blank,
        camera: &cam,
        context: None,
    });
    assert!(matches!(r, Err(Error::EmptyForeground)));
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1, -0.1f64..0.1), 5..60)
        .prop_map(|v| PointCloud::new(v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect()))
}

fn quat_strategy() -> impl Strategy<Value = UnitQuaternion> {
    (any::<u64>()).prop_map(|s| sample_uniform(&mut stream(s, "q")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_nonnegative_and_zero_at_truth(a in cloud_strategy(), r in quat_strategy(), t in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let shift = Vec3::new(t.0, t.1, t.2);
        let b = PointCloud::new(a.points.iter().map(|p| r.apply(p) + shift).collect());
        prop_assert!(brute_force_cost(&r, &a, &b).unwrap() < 1e-9);
        prop_assert!(brute_force_cost(&UnitQuaternion::IDENTITY, &a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn cost_is_rotation_equivariant(a in cloud_strategy(), b in cloud_strategy(), q in quat_strategy(), r in quat_strategy()) {
        let rb = PointCloud::new(b.points.iter().map(|p| r.apply(p)).collect());
        let lhs = brute_force_cost(&r.compose(&q), &a, &rb).unwrap();
        let rhs = brute_force_cost(&q, &a, &b).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs));
    }
}

#[test]
fn camera_frame_clouds_feed_the_cost() {
    let cam = CameraModel::default();
    let mesh = extrude_polygon(&l_outline(0.12, 0.08, 0.03), 0.04).centered();
    let img = render_depth(
        &mesh,
        &Pose::from_translation(Vec3::new(0.0, 0.0, 0.3)),
        &cam,
    );
    let cloud = deproject_camera_frame(&img, &cam, None).unwrap();
    assert_eq!(cloud.len(), img.foreground_count());
    assert_eq!(
        brute_force_cost(&UnitQuaternion::IDENTITY, &cloud, &cloud).unwrap(),
        0.0
    );
}
