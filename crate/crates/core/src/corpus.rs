//! The built-in procedural mesh corpus and loading of corpus directories.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::io::{load_mesh, write_obj, MeshFormat};
use crate::mesh::primitives::{
    box_mesh, extrude_polygon, l_outline, t_outline, torus, u_outline, uv_ellipsoid,
};
use crate::mesh::TriMesh;

/// Corpus members with no proper rotational symmetry.
pub const ASYMMETRIC_IDS: [&str; 5] = [
    "l_bracket_a",
    "l_bracket_c",
    "prism_pentagon",
    "prism_trapezoid",
    "prism_triangle",
];

/// Twenty closed desk-scale solids (meters), sorted by id.
pub fn builtin_corpus() -> Vec<(String, TriMesh)> {
    let ell = |r: [f64; 3]| uv_ellipsoid(r, 32, 16);
    let mut out: Vec<(&str, TriMesh)> = vec![
        ("box_cube", box_mesh([0.08, 0.08, 0.08])),
        ("box_plate", box_mesh([0.12, 0.08, 0.03])),
        ("box_bar", box_mesh([0.14, 0.04, 0.04])),
        ("box_brick", box_mesh([0.10, 0.06, 0.045])),
        ("box_tile", box_mesh([0.09, 0.09, 0.02])),
        ("ellipsoid_a", ell([0.06, 0.04, 0.03])),
        ("ellipsoid_b", ell([0.07, 0.035, 0.025])),
        ("ellipsoid_egg", ell([0.05, 0.04, 0.035])),
        ("ellipsoid_flat", ell([0.06, 0.05, 0.02])),
        (
            "l_bracket_a",
            extrude_polygon(&l_outline(0.12, 0.08, 0.03), 0.04),
        ),
        (
            "l_bracket_b",
            extrude_polygon(&l_outline(0.10, 0.10, 0.025), 0.03),
        ),
        (
            "l_bracket_c",
            extrude_polygon(&l_outline(0.14, 0.06, 0.03), 0.05),
        ),
        (
            "handle_a",
            extrude_polygon(&u_outline(0.12, 0.06, 0.02), 0.03),
        ),
        (
            "handle_b",
            extrude_polygon(&u_outline(0.10, 0.05, 0.015), 0.025),
        ),
        (
            "t_piece_a",
            extrude_polygon(&t_outline(0.10, 0.09, 0.025), 0.03),
        ),
        (
            "t_piece_b",
            extrude_polygon(&t_outline(0.12, 0.08, 0.03), 0.04),
        ),
        ("ring", torus(0.045, 0.015, 48, 24)),
        (
            "prism_triangle",
            extrude_polygon(&[[0.0, 0.0], [0.12, 0.0], [0.0, 0.07]], 0.04),
        ),
        (
            "prism_trapezoid",
            extrude_polygon(
                &[[0.0, 0.0], [0.12, 0.0], [0.09, 0.06], [0.02, 0.05]],
                0.035,
            ),
        ),
        (
            "prism_pentagon",
            extrude_polygon(
                &[
                    [0.0, 0.0],
                    [0.10, 0.0],
                    [0.12, 0.05],
                    [0.05, 0.09],
                    [-0.01, 0.05],
                ],
                0.03,
            ),
        ),
    ];
    out.sort_by(|a, b| a.0.cmp(b.0));
    out.into_iter()
        .map(|(id, m)| (id.to_string(), m.centered().with_name(id)))
        .collect()
}

/// Writes the built-in corpus as `<id>.obj` files.
pub fn write_corpus(dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut ids = Vec::new();
    for (id, mesh) in builtin_corpus() {
        let path = dir.join(format!("{id}.obj"));
        std::fs::write(&path, write_obj(&mesh))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        ids.push(id);
    }
    Ok(ids)
}

/// Loads every OBJ, STL and OFF file in `dir` (not recursive), keyed by file
/// stem and sorted.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<(String, TriMesh)>> {
    if !dir.is_dir() {
        return Err(Error::CorpusNotFound(dir.to_path_buf()));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .path();
        if path.is_file() && MeshFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mesh = load_mesh(&path, None, 1.0)?;
        out.push((id, mesh));
    }
    if out.is_empty() {
        return Err(Error::CorpusNotFound(dir.to_path_buf()));
    }
    Ok(out)
}
