use kitting_demo::{controller_trace, fit_curve, mesh_ids, render_rgba};

#[test]
fn lists_the_corpus() {
    let ids: Vec<String> = serde_json::from_str(&mesh_ids()).unwrap();
    assert_eq!(ids.len(), 20);
    assert!(ids.contains(&"l_bracket_a".to_string()));
}

#[test]
fn render_has_foreground_and_opaque_alpha() {
    let px = render_rgba("box_cube", 10.0, 20.0, 30.0).unwrap();
    assert_eq!(px.len(), 128 * 128 * 4);
    assert!(px.chunks(4).all(|p| p[3] == 255));
    assert!(px.chunks(4).any(|p| p[0] > 0));
    assert!(render_rgba("nope", 0.0, 0.0, 0.0).is_err());
}

#[test]
fn perfect_trace_contracts() {
    let v: serde_json::Value = serde_json::from_str(
        &controller_trace("box_bar", "CONVEX_CONFORMAL", "perfect", 40.0, 0.5, 1).unwrap(),
    )
    .unwrap();
    let r: Vec<f64> = serde_json::from_value(v["residuals_deg"].clone()).unwrap();
    assert!(
        (r[0] - 40.0).abs() < 1e-6 && (r[1] - 20.0).abs() < 1e-6,
        "{r:?}"
    );
    assert_eq!(v["terminated_by"], "THRESHOLD");
    assert!(controller_trace("box_bar", "ROUND", "perfect", 40.0, 0.5, 1).is_err());
}

#[test]
fn fit_starts_full_and_drops() {
    let pts: Vec<[f64; 2]> =
        serde_json::from_str(&fit_curve("box_bar", "CONVEX_CONFORMAL", 60.0, 20.0, 2).unwrap())
            .unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[0], [0.0, 1.0]);
    assert!(pts[3][1] < pts[0][1]);
}

#[test]
fn brute_force_trace_reaches_the_cavity() {
    let v: serde_json::Value = serde_json::from_str(
        &controller_trace("l_bracket_a", "CONVEX_CONFORMAL", "brute", 60.0, 0.8, 1).unwrap(),
    )
    .unwrap();
    assert!(v["final_error_deg"].as_f64().unwrap() < 5.0, "{v}");
    assert!(v["percent_fit"].as_f64().unwrap() > 0.9, "{v}");
}
