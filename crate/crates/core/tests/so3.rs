use std::f64::consts::PI;

use kitting::rng::stream;
use kitting::so3::{
    deg, geodesic_angle, rad, sample_bounded, sample_uniform, slerp, UnitQuaternion,
};
use proptest::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

/// Mean rotation angle of the uniform distribution on SO(3), whose angle
/// density is (1 - cos t) / pi, by Simpson quadrature.
fn uniform_mean_angle() -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |t: f64| t * (1.0 - t.cos()) / PI;
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn uniform_mean_angle_matches_quadrature() {
    let want = deg(uniform_mean_angle());
    assert!((want - 126.476).abs() < 1e-3, "{want}");
    let mut rng = stream(11, "mean-angle");
    let n = 40_000;
    let mean = (0..n)
        .map(|_| deg(sample_uniform(&mut rng).angle()))
        .sum::<f64>()
        / n as f64;
    assert!((mean - want).abs() < 0.5, "sample mean {mean} vs {want}");
}

#[test]
fn squared_scalar_part_is_beta_half_three_halves() {
    let beta = Beta::new(0.5, 1.5).unwrap();
    let mut rng = stream(12, "ks");
    let n = 5000;
    let mut w2: Vec<f64> = (0..n)
        .map(|_| sample_uniform(&mut rng).w().powi(2))
        .collect();
    w2.sort_by(f64::total_cmp);
    let d = w2
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = beta.cdf(x);
            (c - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - c).abs())
        })
        .fold(0.0, f64::max);
    // Critical value at the 1% level.
    assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
}

#[test]
fn bounded_angles_are_uniform_below_the_bound() {
    let mut rng = stream(13, "bounded");
    let bound = rad(30.0);
    let n = 20_000;
    let angles: Vec<f64> = (0..n)
        .map(|_| sample_bounded(&mut rng, bound).unwrap().angle())
        .collect();
    assert!(angles.iter().all(|&a| a < bound + 1e-12));
    let mean = angles.iter().sum::<f64>() / n as f64;
    assert!((mean - bound / 2.0).abs() < 0.01 * bound, "{mean}");
    assert!(sample_bounded(&mut rng, 4.0).is_err());
}

fn quat() -> impl Strategy<Value = UnitQuaternion> {
    any::<u64>().prop_map(|s| sample_uniform(&mut stream(s, "q")))
}

proptest! {
    #[test]
    fn geodesic_is_a_metric(a in quat(), b in quat(), c in quat()) {
        let ab = geodesic_angle(&a, &b);
        prop_assert!((ab - geodesic_angle(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=PI + 1e-12).contains(&ab));
        prop_assert!(ab <= geodesic_angle(&a, &c) + geodesic_angle(&c, &b) + 1e-9);
        prop_assert!(geodesic_angle(&a, &a) < 1e-7);
    }

    #[test]
    fn geodesic_is_bi_invariant(a in quat(), b in quat(), g in quat()) {
        let d = geodesic_angle(&a, &b);
        prop_assert!((geodesic_angle(&g.compose(&a), &g.compose(&b)) - d).abs() < 1e-7);
        prop_assert!((geodesic_angle(&a.compose(&g), &b.compose(&g)) - d).abs() < 1e-7);
    }

    #[test]
    fn slerp_shrinks_distance_linearly(a in quat(), b in quat(), eta in 0.0f64..1.0) {
        let d = geodesic_angle(&a, &b);
        let m = slerp(&a, &b, eta);
        prop_assert!((geodesic_angle(&a, &m) - eta * d).abs() < 1e-7);
        prop_assert!((geodesic_angle(&m, &b) - (1.0 - eta) * d).abs() < 1e-7);
    }

    #[test]
    fn matrices_are_orthonormal(q in quat()) {
        let m = q.to_matrix();
        prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).norm() < 1e-12);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        prop_assert!(UnitQuaternion::from_matrix(&m).approx_eq(&q, 1e-9));
        prop_assert!(q.w() >= 0.0);
    }
}
