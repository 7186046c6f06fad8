//! Closed procedural solids used by tests, the built-in corpus and the demo.

use std::f64::consts::PI;

use super::TriMesh;
use crate::so3::Vec3;

/// Axis-aligned box with full side lengths `size`, centered at the origin.
pub fn box_mesh(size: [f64; 3]) -> TriMesh {
    let h = size.map(|s| 0.5 * s);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h[0] } else { h[0] },
                if i & 2 == 0 { -h[1] } else { h[1] },
                if i & 4 == 0 { -h[2] } else { h[2] },
            )
        })
        .collect();
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
    TriMesh::new(vertices, faces, Some("box".into())).expect("valid box")
}

/// Latitude/longitude tessellated ellipsoid centered at the origin.
pub fn uv_ellipsoid(radii: [f64; 3], segments: usize, rings: usize) -> TriMesh {
    let segments = segments.max(3);
    let rings = rings.max(2);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radii[2])];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(
                radii[0] * theta.sin() * phi.cos(),
                radii[1] * theta.sin() * phi.sin(),
                radii[2] * theta.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radii[2]));
    let south = (vertices.len() - 1) as u32;
    let ring = |r: usize, s: usize| (1 + (r - 1) * segments + (s % segments)) as u32;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriMesh::new(vertices, faces, Some("ellipsoid".into())).expect("valid ellipsoid")
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
pub fn triangulate_polygon(poly: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut tris = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * poly.len() * poly.len() {
        guard += 1;
        let n = idx.len();
        let mut clipped = false;
        for i in 0..n {
            let (ip, ic, inx) = (idx[(i + n - 1) % n], idx[i], idx[(i + 1) % n]);
            let (a, b, c) = (poly[ip], poly[ic], poly[inx]);
            if cross(a, b, c) <= 1e-15 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == ip || j == ic || j == inx {
                    return false;
                }
                let p = poly[j];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if blocked {
                continue;
            }
            tris.push([ip, ic, inx]);
            idx.remove(i);
            clipped = true;
            break;
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        tris.push([idx[0], idx[1], idx[2]]);
    }
    tris
}

/// Prism over a simple polygon in the xy-plane, spanning `z` in
/// `[-height/2, height/2]`.
pub fn extrude_polygon(poly: &[[f64; 2]], height: f64) -> TriMesh {
    let mut poly = poly.to_vec();
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    let n = poly.len();
    let hz = 0.5 * height;
    let mut vertices: Vec<Vec3> = poly.iter().map(|p| Vec3::new(p[0], p[1], -hz)).collect();
    vertices.extend(poly.iter().map(|p| Vec3::new(p[0], p[1], hz)));
    let mut faces = Vec::new();
    for t in triangulate_polygon(&poly) {
        faces.push([t[0] as u32, t[2] as u32, t[1] as u32]);
        faces.push([(t[0] + n) as u32, (t[1] + n) as u32, (t[2] + n) as u32]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b, c, d) = (i as u32, j as u32, (j + n) as u32, (i + n) as u32);
        faces.push([a, b, c]);
        faces.push([a, c, d]);
    }
    TriMesh::new(vertices, faces, Some("prism".into())).expect("valid prism")
}

/// Torus around the z-axis.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = 2.0 * PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = 2.0 * PI * j as f64 / n_minor as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % n_major) * n_minor + (j % n_minor)) as u32;
    let mut faces = Vec::new();
    for i in 0..n_major {
        for j in 0..n_minor {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces, Some("torus".into())).expect("valid torus")
}

/// L-shaped outline: `length` by `width` legs of thickness `thickness`.
pub fn l_outline(length: f64, width: f64, thickness: f64) -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [length, 0.0],
        [length, thickness],
        [thickness, thickness],
        [thickness, width],
        [0.0, width],
    ]
}

/// U-shaped outline (a grab handle seen from the side).
pub fn u_outline(span: f64, rise: f64, thickness: f64) -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [thickness, 0.0],
        [thickness, rise - thickness],
        [span - thickness, rise - thickness],
        [span - thickness, 0.0],
        [span, 0.0],
        [span, rise],
        [0.0, rise],
    ]
}

/// T-shaped outline.
pub fn t_outline(bar: f64, stem: f64, thickness: f64) -> Vec<[f64; 2]> {
    let h = 0.5 * thickness;
    let c = 0.5 * bar;
    vec![
        [c - h, 0.0],
        [c + h, 0.0],
        [c + h, stem - thickness],
        [bar, stem - thickness],
        [bar, stem],
        [0.0, stem],
        [0.0, stem - thickness],
        [c - h, stem - thickness],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn primitives_are_watertight_with_expected_volume() {
        let b = box_mesh([0.3, 0.2, 0.1]);
        assert!(b.is_watertight());
        assert_relative_eq!(b.volume(), 0.006, epsilon = 1e-12);

        let e = uv_ellipsoid([0.1, 0.05, 0.04], 48, 24);
        assert!(e.is_watertight());
        let exact = 4.0 / 3.0 * PI * 0.1 * 0.05 * 0.04;
        assert!((e.volume() - exact).abs() / exact < 0.02);

        let l = extrude_polygon(&l_outline(0.12, 0.08, 0.03), 0.04);
        assert!(l.is_watertight());
        let area = 0.12 * 0.03 + 0.03 * 0.05;
        assert_relative_eq!(l.volume(), area * 0.04, epsilon = 1e-12);

        let u = extrude_polygon(&u_outline(0.12, 0.05, 0.015), 0.02);
        assert!(u.is_watertight());
        let t = extrude_polygon(&t_outline(0.1, 0.09, 0.02), 0.02);
        assert!(t.is_watertight());

        let tor = torus(0.05, 0.015, 48, 24);
        assert!(tor.is_watertight());
        let exact = 2.0 * PI * PI * 0.05 * 0.015 * 0.015;
        assert!((tor.volume() - exact).abs() / exact < 0.03);
    }

    #[test]
    fn clockwise_outline_is_reoriented() {
        let mut poly = l_outline(1.0, 1.0, 0.2);
        poly.reverse();
        let m = extrude_polygon(&poly, 1.0);
        assert!(m.is_watertight());
        assert_relative_eq!(m.volume(), 0.36, epsilon = 1e-12);
    }
}
