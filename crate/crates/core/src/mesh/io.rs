//! OBJ, STL (binary or ASCII, auto-detected) and OFF readers, plus an OBJ
//! writer for the procedural corpus.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::so3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Stl,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(MeshFormat::Stl),
            "off" => Some(MeshFormat::Off),
            _ => None,
        }
    }
}

/// Reads a mesh; `format` defaults to the file extension. Coordinates are
/// multiplied by `scale` (meters per file unit).
pub fn load_mesh(path: &Path, format: Option<MeshFormat>, scale: f64) -> Result<TriMesh> {
    let format = format
        .or_else(|| MeshFormat::from_path(path))
        .ok_or_else(|| {
            Error::InvalidArgument(format!("{}: unknown mesh format", path.display()))
        })?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    parse_mesh(&bytes, format, scale, path, name)
}

pub fn parse_mesh(
    bytes: &[u8],
    format: MeshFormat,
    scale: f64,
    path: &Path,
    name: Option<String>,
) -> Result<TriMesh> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let (mut vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(bytes, path)?,
        MeshFormat::Off => parse_off(bytes, path)?,
        MeshFormat::Stl => parse_stl(bytes, path)?,
    };
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    for v in &mut vertices {
        *v *= scale;
    }
    TriMesh::new(vertices, faces, name)
}

fn parse_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        offset,
        message: message.into(),
    }
}

/// Lines with their starting byte offsets.
fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    let mut offset = 0;
    bytes.split(|&b| b == b'\n').map(move |line| {
        let start = offset;
        offset += line.len() + 1;
        (start, line)
    })
}

/// Whitespace tokens with absolute byte offsets.
fn tokens(line: &[u8], base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < line.len() {
        while i < line.len() && line[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < line.len() && !line[i].is_ascii_whitespace() {
            i += 1;
        }
        if start < i {
            let tok = std::str::from_utf8(&line[start..i]).unwrap_or("\u{fffd}");
            out.push((base + start, tok));
        }
    }
    out
}

fn parse_f64(path: &Path, tok: Option<&(usize, &str)>, line_end: usize, what: &str) -> Result<f64> {
    match tok {
        None => Err(parse_err(path, line_end, format!("missing {what}"))),
        Some(&(off, s)) => s
            .parse::<f64>()
            .map_err(|_| parse_err(path, off, format!("invalid {what} '{s}'"))),
    }
}

fn parse_obj(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (base, raw) in lines(bytes) {
        let line = match raw.iter().position(|&b| b == b'#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let toks = tokens(line, base);
        let end = base + line.len();
        match toks.first().map(|t| t.1) {
            Some("v") => {
                let x = parse_f64(path, toks.get(1), end, "x coordinate")?;
                let y = parse_f64(path, toks.get(2), end, "y coordinate")?;
                let z = parse_f64(path, toks.get(3), end, "z coordinate")?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                if toks.len() < 4 {
                    return Err(parse_err(path, end, "face needs at least 3 vertices"));
                }
                let mut idx = Vec::with_capacity(toks.len() - 1);
                for &(off, t) in &toks[1..] {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_err(path, off, format!("invalid face index '{t}'")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(parse_err(path, off, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_off(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let mut toks: Vec<(usize, &str)> = Vec::new();
    for (base, raw) in lines(bytes) {
        let line = match raw.iter().position(|&b| b == b'#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        toks.extend(tokens(line, base));
    }
    let eof = bytes.len();
    let mut it = toks.into_iter().peekable();
    match it.next() {
        Some((_, "OFF")) => {}
        Some((off, other)) => {
            return Err(parse_err(
                path,
                off,
                format!("expected 'OFF', got '{other}'"),
            ))
        }
        None => return Err(parse_err(path, 0, "empty file")),
    }
    let mut count = |what: &str| -> Result<usize> {
        match it.next() {
            None => Err(parse_err(
                path,
                eof,
                format!("unexpected end of file reading {what}"),
            )),
            Some((off, s)) => s
                .parse::<usize>()
                .map_err(|_| parse_err(path, off, format!("invalid {what} '{s}'"))),
        }
    };
    let nv = count("vertex count")?;
    let nf = count("face count")?;
    let _ne = count("edge count")?;
    let mut next_f = |what: &str| -> Result<f64> {
        match it.next() {
            None => Err(parse_err(
                path,
                eof,
                format!("unexpected end of file reading {what}"),
            )),
            Some((off, s)) => s
                .parse::<f64>()
                .map_err(|_| parse_err(path, off, format!("invalid {what} '{s}'"))),
        }
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = next_f("vertex coordinate")?;
        let y = next_f("vertex coordinate")?;
        let z = next_f("vertex coordinate")?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = next_f("face size")?;
        if k < 3.0 || k.fract() != 0.0 {
            return Err(parse_err(path, eof, format!("invalid face size {k}")));
        }
        let mut idx = Vec::with_capacity(k as usize);
        for _ in 0..k as usize {
            let i = next_f("face index")?;
            if i < 0.0 || i.fract() != 0.0 || i as usize >= nv {
                return Err(parse_err(path, eof, format!("face index {i} out of range")));
            }
            idx.push(i as u32);
        }
        for j in 1..idx.len() - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    Ok((vertices, faces))
}

fn parse_stl(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let looks_ascii = bytes.len() >= 5 && bytes[..5].eq_ignore_ascii_case(b"solid") && {
        // Binary files may also start with "solid"; trust the size field.
        if bytes.len() >= 84 {
            let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
            bytes.len() != 84 + 50 * n
        } else {
            true
        }
    };
    let soup = if looks_ascii {
        parse_stl_ascii(bytes, path)?
    } else {
        parse_stl_binary(bytes, path)?
    };
    Ok(weld(soup))
}

fn parse_stl_binary(bytes: &[u8], path: &Path) -> Result<Vec<[Vec3; 3]>> {
    if bytes.len() < 84 {
        return Err(parse_err(path, bytes.len(), "truncated binary STL header"));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let mut tris = Vec::with_capacity(n);
    for t in 0..n {
        let base = 84 + 50 * t;
        if base + 50 > bytes.len() {
            return Err(parse_err(
                path,
                bytes.len(),
                format!("truncated binary STL: triangle {t} of {n} incomplete"),
            ));
        }
        let f = |k: usize| {
            let o = base + 12 + 4 * k;
            f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64
        };
        tris.push([
            Vec3::new(f(0), f(1), f(2)),
            Vec3::new(f(3), f(4), f(5)),
            Vec3::new(f(6), f(7), f(8)),
        ]);
    }
    Ok(tris)
}

fn parse_stl_ascii(bytes: &[u8], path: &Path) -> Result<Vec<[Vec3; 3]>> {
    let mut tris = Vec::new();
    let mut current: Vec<Vec3> = Vec::new();
    let mut open_facet = None;
    for (base, line) in lines(bytes) {
        let toks = tokens(line, base);
        let end = base + line.len();
        match toks.first().map(|t| t.1) {
            Some("facet") => open_facet = Some(base),
            Some("vertex") => {
                let x = parse_f64(path, toks.get(1), end, "x coordinate")?;
                let y = parse_f64(path, toks.get(2), end, "y coordinate")?;
                let z = parse_f64(path, toks.get(3), end, "z coordinate")?;
                current.push(Vec3::new(x, y, z));
            }
            Some("endfacet") => {
                if current.len() != 3 {
                    return Err(parse_err(
                        path,
                        base,
                        format!("facet has {} vertices", current.len()),
                    ));
                }
                tris.push([current[0], current[1], current[2]]);
                current.clear();
                open_facet = None;
            }
            _ => {}
        }
    }
    if let Some(off) = open_facet {
        return Err(parse_err(
            path,
            bytes.len().max(off),
            "unterminated facet at end of file",
        ));
    }
    Ok(tris)
}

/// Merges bitwise-identical vertices of a triangle soup.
fn weld(soup: Vec<[Vec3; 3]>) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let faces = soup
        .into_iter()
        .map(|tri| {
            tri.map(|v| {
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *index.entry(key).or_insert_with(|| {
                    vertices.push(v);
                    (vertices.len() - 1) as u32
                })
            })
        })
        .collect();
    (vertices, faces)
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    if let Some(name) = mesh.name() {
        let _ = writeln!(s, "o {name}");
    }
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::box_mesh;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
f 1 3 4 2
f 5 6 8 7
f 1 2 6 5
f 3 7 8 4
f 1 5 7 3
f 2 4 8 6
";

    fn p() -> &'static Path {
        Path::new("test.obj")
    }

    #[test]
    fn obj_unit_cube() {
        let m = parse_mesh(CUBE_OBJ.as_bytes(), MeshFormat::Obj, 1.0, p(), None).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
        assert!(m.is_watertight());
    }

    #[test]
    fn obj_unreferenced_vertex_is_pruned() {
        let src = format!("{CUBE_OBJ}v 9 9 9\n");
        let m = parse_mesh(src.as_bytes(), MeshFormat::Obj, 1.0, p(), None).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
    }

    #[test]
    fn obj_truncated_reports_offset() {
        let cut = format!("{CUBE_OBJ}v 1 2");
        let err = parse_mesh(cut.as_bytes(), MeshFormat::Obj, 1.0, p(), None).unwrap_err();
        match &err {
            Error::Parse { offset, .. } => assert_eq!(*offset, cut.len()),
            e => panic!("unexpected {e}"),
        }
        assert!(err.to_string().contains(&format!("byte {}", cut.len())));
        let face_cut = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2";
        assert!(err_text(face_cut.as_bytes()).contains("byte"));
    }

    fn err_text(bytes: &[u8]) -> String {
        parse_mesh(bytes, MeshFormat::Obj, 1.0, p(), None)
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn obj_bad_index() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n";
        match parse_mesh(src.as_bytes(), MeshFormat::Obj, 1.0, p(), None).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, src.find('7').unwrap()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn obj_scale_and_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf -4 -2 -3\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
        let m = parse_mesh(src.as_bytes(), MeshFormat::Obj, 0.01, p(), None).unwrap();
        assert!(m.is_watertight());
        assert!((m.volume() - 1e-6 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_and_non_finite() {
        assert!(matches!(
            parse_mesh(b"# nothing\n", MeshFormat::Obj, 1.0, p(), None),
            Err(Error::EmptyMesh)
        ));
        let src = "v 0 0 0\nv inf 0 0\nv 0 1 0\nf 1 2 3\n";
        assert!(matches!(
            parse_mesh(src.as_bytes(), MeshFormat::Obj, 1.0, p(), None),
            Err(Error::NonFiniteCoordinates)
        ));
    }

    fn binary_stl(mesh: &TriMesh) -> Vec<u8> {
        let mut out = vec![0u8; 80];
        out.extend((mesh.faces().len() as u32).to_le_bytes());
        for f in 0..mesh.faces().len() {
            out.extend([0u8; 12]);
            for v in mesh.triangle(f) {
                for c in v.iter() {
                    out.extend((*c as f32).to_le_bytes());
                }
            }
            out.extend([0u8; 2]);
        }
        out
    }

    #[test]
    fn stl_binary_and_ascii() {
        let cube = box_mesh([1.0, 1.0, 1.0]);
        let bin = binary_stl(&cube);
        let m = parse_mesh(&bin, MeshFormat::Stl, 1.0, p(), None).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert!(m.is_watertight());

        let truncated = &bin[..bin.len() - 7];
        match parse_mesh(truncated, MeshFormat::Stl, 1.0, p(), None).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, truncated.len()),
            e => panic!("unexpected {e}"),
        }

        let mut ascii = String::from("solid cube\n");
        for f in 0..cube.faces().len() {
            ascii.push_str("facet normal 0 0 0\nouter loop\n");
            for v in cube.triangle(f) {
                ascii.push_str(&format!("vertex {} {} {}\n", v.x, v.y, v.z));
            }
            ascii.push_str("endloop\nendfacet\n");
        }
        ascii.push_str("endsolid cube\n");
        let m = parse_mesh(ascii.as_bytes(), MeshFormat::Stl, 1.0, p(), None).unwrap();
        assert_eq!(m.faces().len(), 12);
        assert!(m.is_watertight());
    }

    #[test]
    fn off_round_trip_and_truncation() {
        let src = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        let m = parse_mesh(src.as_bytes(), MeshFormat::Off, 1.0, p(), None).unwrap();
        assert!(m.is_watertight());
        let cut = &src[..src.len() - 6];
        match parse_mesh(cut.as_bytes(), MeshFormat::Off, 1.0, p(), None).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, cut.len()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn obj_writer_round_trip() {
        let cube = box_mesh([0.2, 0.3, 0.4]);
        let text = write_obj(&cube);
        let back = parse_mesh(text.as_bytes(), MeshFormat::Obj, 1.0, p(), None).unwrap();
        assert_eq!(back.faces(), cube.faces());
        assert!((back.volume() - cube.volume()).abs() < 1e-9);
    }
}
