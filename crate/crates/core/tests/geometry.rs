use kitting::corpus::builtin_corpus;
use kitting::mesh::primitives::{box_mesh, uv_ellipsoid};
use kitting::render::render_depth;
use kitting::rng::stream;
use kitting::so3::{sample_uniform, Pose, Vec3};
use kitting::{CameraModel, TriMesh};
use nalgebra::{Matrix3, SymmetricEigen};
use proptest::prelude::*;

/// Volume of the box aligned with the principal axes of the vertices.
fn pca_box_volume(mesh: &TriMesh) -> f64 {
    let v = mesh.vertices();
    let mean = v.iter().sum::<Vec3>() / v.len() as f64;
    let cov = v.iter().fold(Matrix3::zeros(), |acc, p| {
        acc + (p - mean) * (p - mean).transpose()
    });
    let axes = SymmetricEigen::new(cov).eigenvectors;
    (0..3)
        .map(|k| {
            let a = axes.column(k);
            let proj = v.iter().map(|p| p.dot(&a));
            let (lo, hi) = proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                (l.min(x), h.max(x))
            });
            hi - lo
        })
        .product()
}

#[test]
fn minimum_box_beats_principal_and_aligned_boxes() {
    for (id, mesh) in builtin_corpus() {
        let obb = mesh.obb().unwrap();
        let e = mesh.aabb().extent();
        let tol = 1e-9;
        assert!(
            obb.volume() <= pca_box_volume(&mesh) * (1.0 + 1e-6) + tol,
            "{id}"
        );
        assert!(obb.volume() <= e.x * e.y * e.z * (1.0 + 1e-6) + tol, "{id}");
        assert!(obb.volume() >= mesh.volume() * (1.0 - 1e-9), "{id}");
        assert!(
            mesh.vertices().iter().all(|p| obb.contains(p, 1e-9)),
            "{id}"
        );
    }
}

fn pose() -> impl Strategy<Value = Pose> {
    (any::<u64>(), -0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2).prop_map(|(s, x, y, z)| {
        Pose::new(sample_uniform(&mut stream(s, "pose")), Vec3::new(x, y, z))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rigid_motion_preserves_volume_and_box(p in pose()) {
        let m = box_mesh([0.1, 0.06, 0.03]);
        let t = m.transform(&p);
        prop_assert!((t.volume() - m.volume()).abs() < 1e-12);
        prop_assert!((t.obb().unwrap().volume() - m.obb().unwrap().volume()).abs() < 1e-9);
        prop_assert!((t.centroid() - p.apply(&m.centroid())).norm() < 1e-12);
    }

    #[test]
    fn containment_follows_the_mesh(p in pose(), q in (-0.06f64..0.06, -0.06f64..0.06, -0.06f64..0.06)) {
        let m = box_mesh([0.1, 0.06, 0.03]);
        let local = Vec3::new(q.0, q.1, q.2);
        let margin = (local.x.abs() - 0.05).abs().min((local.y.abs() - 0.03).abs()).min((local.z.abs() - 0.015).abs());
        prop_assume!(margin > 1e-6);
        let inside = local.x.abs() < 0.05 && local.y.abs() < 0.03 && local.z.abs() < 0.015;
        prop_assert_eq!(m.transform(&p).contains(&p.apply(&local)).unwrap(), inside);
    }

    #[test]
    fn posed_render_equals_render_of_posed_mesh(p in pose()) {
        let cam = CameraModel::default();
        let m = box_mesh([0.1, 0.06, 0.03]);
        let lifted = Pose::from_translation(Vec3::new(0.0, 0.0, 0.3)).compose(&p);
        let a = render_depth(&m, &lifted, &cam);
        let b = render_depth(&m.transform(&lifted), &Pose::identity(), &cam);
        let worst = a.data().iter().zip(b.data()).filter(|(x, y)| (**x > 0.0) == (**y > 0.0)).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        let differ = a.data().iter().zip(b.data()).filter(|(x, y)| (**x > 0.0) != (**y > 0.0)).count();
        prop_assert!(worst < 1e-5);
        prop_assert!(differ <= 2, "{} silhouette pixels differ", differ);
    }
}

#[test]
fn sphere_depth_matches_ray_intersection() {
    let cam = CameraModel::default();
    let r = 0.1;
    let c = Vec3::new(0.02, -0.01, 0.3);
    let (segments, rings) = (128, 64);
    let img = render_depth(
        &uv_ellipsoid([r; 3], segments, rings),
        &Pose::from_translation(c),
        &cam,
    );
    // Largest gap between the tessellation and the sphere along a ray.
    let tol = 2.0 * r * (1.0 - (std::f64::consts::PI / rings as f64).cos()) + 1e-6;
    let mut checked = 0;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let (o, d) = cam.ray(u as f64, v as f64);
            let d = d.normalize();
            let oc = o - c;
            let b = oc.dot(&d);
            let disc = b * b - (oc.norm_squared() - r * r);
            let got = img.get(u, v) as f64;
            if disc <= 0.0 {
                continue;
            }
            let hit = o + d * (-b - disc.sqrt());
            let normal = (hit - c) / r;
            if normal.dot(&-d) < 0.5 {
                continue;
            }
            let want = cam.project(&hit).unwrap().2;
            assert!((got - want).abs() < tol, "pixel ({u},{v}): {got} vs {want}");
            checked += 1;
        }
    }
    assert!(checked > 500, "{checked}");
}

#[test]
fn top_face_pixel_count_matches_footprint() {
    let cam = CameraModel::default();
    let side = 0.1;
    let top = 0.3 + 0.01;
    let img = render_depth(
        &box_mesh([side, side, 0.02]),
        &Pose::from_translation(Vec3::new(0.0, 0.0, 0.3)),
        &cam,
    );
    let depth = cam.project(&Vec3::new(0.0, 0.0, top)).unwrap().2;
    let cells = side / cam.pixel_footprint(depth);
    let count = img.foreground_count() as f64;
    // Side faces are invisible to a camera on the axis, so the footprint is
    // the top face up to one pixel of boundary.
    assert!(
        (count - cells * cells).abs() <= 4.0 * cells + 4.0,
        "{count} vs {}",
        cells * cells
    );
    let on_axis = img.get(cam.width / 2, cam.height / 2) as f64;
    assert!((on_axis - depth).abs() < 1e-5);
}
