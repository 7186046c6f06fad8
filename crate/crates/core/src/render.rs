//! Pinhole depth rendering by ray casting, deprojection back to world points,
//! workspace segmentation, and the KNDI raster format.
//!
//! Camera frame: x to the right, y up, the camera looks along -z. Pixel
//! column `u` grows with x and row `v` grows downward, so a camera-frame
//! point `(X, Y, Z)` with depth `d = -Z` lands at
//! `u = cx + fx X / d`, `v = cy - fy Y / d`. Integer pixel indices are the
//! sample positions; pixel `(cx, cy)` sits on the optical axis. Depth is
//! z-depth along the optical axis, not ray length, and `0.0` marks
//! background.

use std::io::{Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::so3::{Pose, Vec3};

pub const KNDI_MAGIC: &[u8; 4] = b"KNDI";
pub const KNDI_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world transform.
    pub pose: Pose,
}

impl Default for CameraModel {
    /// 128 x 128, 45 degree vertical field of view, 0.8 m above the
    /// workspace plane `z = 0`, looking straight down.
    fn default() -> Self {
        CameraModel::from_fov(
            128,
            128,
            45.0,
            Pose::from_translation(Vec3::new(0.0, 0.0, 0.8)),
        )
    }
}

impl CameraModel {
    /// Square pixels, principal point at `(width / 2, height / 2)`.
    pub fn from_fov(width: u32, height: u32, vertical_fov_deg: f64, pose: Pose) -> Self {
        let fy = 0.5 * height as f64 / (0.5 * vertical_fov_deg.to_radians()).tan();
        CameraModel {
            width,
            height,
            fx: fy,
            fy,
            cx: (width / 2) as f64,
            cy: (height / 2) as f64,
            pose,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy)
            && self.pose.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid camera model {self:?}"
            )))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame direction through pixel `(u, v)`, scaled so its z
    /// component is -1. The ray parameter along it is therefore z-depth.
    pub fn ray_camera(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, -1.0)
    }

    /// World-frame origin and direction for pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        (
            self.pose.translation,
            self.pose.rotation.apply(&self.ray_camera(u, v)),
        )
    }

    /// Continuous pixel coordinates and depth of a world point; `None` when
    /// the point is not in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.pose.inverse().apply(p);
        let d = -c.z;
        if d <= 0.0 {
            return None;
        }
        Some((self.cx + self.fx * c.x / d, self.cy - self.fy * c.y / d, d))
    }

    pub fn camera_point(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.ray_camera(u, v) * depth
    }

    pub fn world_point(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.pose.apply(&self.camera_point(u, v, depth))
    }

    /// Side length in meters of one pixel at `depth`.
    pub fn pixel_footprint(&self, depth: f64) -> f64 {
        depth / self.fx.min(self.fy)
    }

    /// Depth of the horizontal world plane at height `z` along the optical
    /// axis.
    pub fn plane_depth(&self, z: f64) -> f64 {
        let (o, d) = self.ray(self.cx, self.cy);
        (z - o.z) / d.z
    }
}

/// Row-major depth raster in meters; `0.0` is background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "raster of {}x{} needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth at index {i} is {} (must be finite and non-negative)",
                data[i]
            )));
        }
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub(crate) fn set(&mut self, u: u32, v: u32, depth: f32) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = depth;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn check_dims(&self, camera: &CameraModel) -> Result<()> {
        if self.width != camera.width || self.height != camera.height {
            return Err(Error::DimensionMismatch {
                expected_w: camera.width,
                expected_h: camera.height,
                got_w: self.width,
                got_h: self.height,
            });
        }
        Ok(())
    }

    /// Pixel bounding box `(u_min, v_min, u_max, v_max)` of nonzero pixels,
    /// inclusive.
    pub fn foreground_bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) > 0.0 {
                    bb = Some(match bb {
                        None => (u, v, u, v),
                        Some((a, b, c, d)) => (a.min(u), b.min(v), c.max(u), d.max(v)),
                    });
                }
            }
        }
        bb
    }

    /// Mean pixel coordinate of nonzero pixels.
    pub fn foreground_center(&self) -> Option<(f64, f64)> {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) > 0.0 {
                    su += u as f64;
                    sv += v as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }

    /// Copy with every pixel outside `mask` set to background.
    pub fn masked(&self, mask: &PixelMask) -> Result<DepthImage> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: mask.width,
                got_h: mask.height,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&mask.bits)
            .map(|(&d, &m)| if m { d } else { 0.0 })
            .collect();
        Ok(DepthImage {
            width: self.width,
            height: self.height,
            data,
        })
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for d in &self.data {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        let n = width as usize * height as usize;
        if bytes.len() != n * 4 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} raster needs {} bytes, got {}",
                width,
                height,
                n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        DepthImage::from_data(width, height, data)
    }

    pub fn write_kndi<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = [0u8; KNDI_HEADER_LEN];
        header[..4].copy_from_slice(KNDI_MAGIC);
        header[4..8].copy_from_slice(&self.width.to_le_bytes());
        header[8..12].copy_from_slice(&self.height.to_le_bytes());
        w.write_all(&header)?;
        w.write_all(&self.to_le_bytes())
    }

    pub fn to_kndi_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(KNDI_HEADER_LEN + self.data.len() * 4);
        self.write_kndi(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_kndi_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = parse_kndi_header(bytes)?;
        DepthImage::from_le_bytes(header.width, header.height, payload)
    }

    pub fn read_kndi<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("reading KNDI raster", e))?;
        DepthImage::from_kndi_bytes(&bytes)
    }

    pub fn save_kndi(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kndi_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load_kndi(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        DepthImage::from_kndi_bytes(&bytes)
    }

    /// 16-bit grayscale PNG with depth quantized to millimeters.
    pub fn write_png16<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::io("writing PNG header", std::io::Error::other(e)))?;
        let mut buf = Vec::with_capacity(self.data.len() * 2);
        for d in &self.data {
            let mm = (f64::from(*d) * 1000.0).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&mm.to_be_bytes());
        }
        writer
            .write_image_data(&buf)
            .map_err(|e| Error::io("writing PNG data", std::io::Error::other(e)))
    }

    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_png16(std::io::BufWriter::new(file))
    }
}

/// Header fields of a KNDI raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KndiHeader {
    pub width: u32,
    pub height: u32,
    pub reserved: u32,
}

pub fn parse_kndi_header(bytes: &[u8]) -> Result<(KndiHeader, &[u8])> {
    let bad = |offset: usize, message: String| Error::Parse {
        path: "<kndi>".into(),
        offset,
        message,
    };
    if bytes.len() < KNDI_HEADER_LEN {
        return Err(bad(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != KNDI_MAGIC {
        return Err(bad(0, "bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let header = KndiHeader {
        width: word(4),
        height: word(8),
        reserved: word(12),
    };
    let expected = header.width as usize * header.height as usize * 4;
    let payload = &bytes[KNDI_HEADER_LEN..];
    if payload.len() != expected {
        return Err(bad(
            bytes.len(),
            format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            ),
        ));
    }
    Ok((header, payload))
}

/// Boolean per-pixel selection, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl PixelMask {
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

fn fill_rows<F>(camera: &CameraModel, f: F) -> DepthImage
where
    F: Fn(u32, u32) -> f32 + Sync,
{
    let mut img = DepthImage::zeros(camera.width, camera.height);
    let w = camera.width as usize;
    let row = |(v, row): (usize, &mut [f32])| {
        for (u, px) in row.iter_mut().enumerate() {
            *px = f(u as u32, v as u32);
        }
    };
    #[cfg(feature = "parallel")]
    img.data.par_chunks_mut(w).enumerate().for_each(row);
    #[cfg(not(feature = "parallel"))]
    img.data.chunks_mut(w).enumerate().for_each(row);
    img
}

/// One mesh instance in a scene.
#[derive(Debug, Clone, Copy)]
pub struct Placed<'a> {
    pub mesh: &'a TriMesh,
    pub pose: Pose,
}

/// Nearest z-depth over the given meshes and an optional horizontal plane
/// at world height `plane_z`.
pub fn render_scene(
    items: &[Placed<'_>],
    plane_z: Option<f64>,
    camera: &CameraModel,
) -> DepthImage {
    let locals: Vec<Pose> = items.iter().map(|it| it.pose.inverse()).collect();
    fill_rows(camera, |u, v| {
        let (o, d) = camera.ray(u as f64, v as f64);
        let mut best = f64::INFINITY;
        if let Some(z) = plane_z {
            if d.z != 0.0 {
                let t = (z - o.z) / d.z;
                if t > 0.0 {
                    best = t;
                }
            }
        }
        for (it, inv) in items.iter().zip(&locals) {
            let lo = inv.apply(&o);
            let ld = inv.rotation.apply(&d);
            if let Some(h) =
                it.mesh
                    .bvh()
                    .closest_hit(it.mesh.vertices(), it.mesh.faces(), &lo, &ld, 0.0, best)
            {
                best = h.t;
            }
        }
        if best.is_finite() {
            best as f32
        } else {
            0.0
        }
    })
}

/// Depth image of `mesh` at `pose` with an empty background. An object
/// entirely outside the frustum yields an all-zero raster.
pub fn render_depth(mesh: &TriMesh, pose: &Pose, camera: &CameraModel) -> DepthImage {
    render_scene(&[Placed { mesh, pose: *pose }], None, camera)
}

/// Depth image of a workspace surface at height `surface_z` with the solid
/// `cavity` (at `pose`) carved out of it: rays that meet the surface inside
/// the cavity continue to the first cavity wall below.
pub fn render_impression(
    cavity: &TriMesh,
    pose: &Pose,
    surface_z: f64,
    camera: &CameraModel,
) -> Result<DepthImage> {
    if !cavity.is_watertight() {
        return Err(Error::NotWatertight);
    }
    let inv = pose.inverse();
    Ok(fill_rows(camera, |u, v| {
        let (o, d) = camera.ray(u as f64, v as f64);
        if d.z == 0.0 {
            return 0.0;
        }
        let t_s = (surface_z - o.z) / d.z;
        if t_s <= 0.0 {
            return 0.0;
        }
        let lo = inv.apply(&o);
        let ld = inv.rotation.apply(&d);
        let entry = lo + ld * t_s;
        if !cavity.contains_unchecked(&entry) {
            return t_s as f32;
        }
        cavity
            .bvh()
            .closest_hit(
                cavity.vertices(),
                cavity.faces(),
                &lo,
                &ld,
                t_s,
                f64::INFINITY,
            )
            .map_or(t_s as f32, |h| h.t as f32)
    }))
}

/// World-frame points for every nonzero pixel (restricted to `mask` when
/// given).
pub fn deproject(
    image: &DepthImage,
    camera: &CameraModel,
    mask: Option<&PixelMask>,
) -> Result<PointCloud> {
    let local = deproject_camera_frame(image, camera, mask)?;
    Ok(local.transformed(&camera.pose))
}

/// Like [`deproject`] but in the camera frame.
pub fn deproject_camera_frame(
    image: &DepthImage,
    camera: &CameraModel,
    mask: Option<&PixelMask>,
) -> Result<PointCloud> {
    image.check_dims(camera)?;
    if let Some(m) = mask {
        if m.width != image.width || m.height != image.height {
            return Err(Error::DimensionMismatch {
                expected_w: image.width,
                expected_h: image.height,
                got_w: m.width,
                got_h: m.height,
            });
        }
    }
    let mut points = Vec::new();
    for v in 0..image.height {
        for u in 0..image.width {
            let d = image.get(u, v);
            if d <= 0.0 || mask.is_some_and(|m| !m.get(u, v)) {
                continue;
            }
            points.push(camera.camera_point(u as f64, v as f64, f64::from(d)));
        }
    }
    Ok(PointCloud::new(points))
}

/// Pixels that are nonzero and differ from `plane_depth` by more than
/// `slack`.
pub fn segment_workspace(image: &DepthImage, plane_depth: f64, slack: f64) -> PixelMask {
    let bits = image
        .data
        .iter()
        .map(|&d| d > 0.0 && (f64::from(d) - plane_depth).abs() > slack)
        .collect();
    PixelMask {
        width: image.width,
        height: image.height,
        bits,
    }
}

/// Square crop around `center` (pixel coordinates) with side equal to the
/// foreground's larger pixel extent times `1 + margin_fraction`, resampled
/// to `out_size` x `out_size`.
///
/// Pixel `i` covers `[i, i + 1)`; output pixel centers are mapped into the
/// window and sampled bilinearly. Background neighbors get zero weight and
/// the remaining weights are renormalized; samples with no foreground
/// neighbor stay background.
pub fn crop_and_resize(
    image: &DepthImage,
    center: (f64, f64),
    margin_fraction: f64,
    out_size: u32,
) -> Result<DepthImage> {
    if out_size == 0 || margin_fraction.is_nan() || margin_fraction < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "crop needs out_size > 0 and margin >= 0, got {out_size} and {margin_fraction}"
        )));
    }
    let (u0, v0, u1, v1) = image.foreground_bbox().ok_or(Error::EmptyForeground)?;
    let extent = ((u1 - u0 + 1).max(v1 - v0 + 1)) as f64;
    let side = extent * (1.0 + margin_fraction);
    // Edge coordinates: pixel index i has center i + 0.5.
    let left = center.0 + 0.5 - 0.5 * side;
    let top = center.1 + 0.5 - 0.5 * side;
    if left >= image.width as f64
        || top >= image.height as f64
        || left + side <= 0.0
        || top + side <= 0.0
    {
        return Err(Error::InvalidArgument(
            "crop window misses the raster".into(),
        ));
    }
    let scale = side / out_size as f64;
    let mut out = DepthImage::zeros(out_size, out_size);
    for j in 0..out_size {
        for i in 0..out_size {
            let x = left + (i as f64 + 0.5) * scale - 0.5;
            let y = top + (j as f64 + 0.5) * scale - 0.5;
            out.set(i, j, sample_bilinear(image, x, y));
        }
    }
    Ok(out)
}

/// Bilinear sample at pixel-index coordinates, ignoring background and
/// out-of-raster neighbors.
fn sample_bilinear(image: &DepthImage, x: f64, y: f64) -> f32 {
    let xf = x.floor();
    let yf = y.floor();
    let (fx, fy) = (x - xf, y - yf);
    let (mut acc, mut wsum) = (0.0f64, 0.0f64);
    for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
            let w = wx * wy;
            if w <= 0.0 {
                continue;
            }
            let (u, v) = (xf as i64 + dx, yf as i64 + dy);
            if u < 0 || v < 0 || u >= image.width as i64 || v >= image.height as i64 {
                continue;
            }
            let d = image.get(u as u32, v as u32);
            if d > 0.0 {
                acc += w * f64::from(d);
                wsum += w;
            }
        }
    }
    if wsum > 0.0 {
        (acc / wsum) as f32
    } else {
        0.0
    }
}

/// Splats world points into a raster at their nearest pixel, keeping the
/// smallest depth per pixel.
pub fn project_cloud(cloud: &PointCloud, camera: &CameraModel) -> DepthImage {
    let mut img = DepthImage::zeros(camera.width, camera.height);
    for p in &cloud.points {
        let Some((u, v, d)) = camera.project(p) else {
            continue;
        };
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= camera.width as f64 || v >= camera.height as f64 {
            continue;
        }
        let (u, v) = (u as u32, v as u32);
        let cur = img.get(u, v);
        let d = d as f32;
        if cur == 0.0 || d < cur {
            img.set(u, v, d);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::box_mesh;
    use approx::assert_relative_eq;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn default_intrinsics() {
        let c = cam();
        c.validate().unwrap();
        assert_relative_eq!(c.fy, 64.0 / (22.5f64).to_radians().tan(), epsilon = 1e-12);
        assert_eq!((c.cx, c.cy), (64.0, 64.0));
        assert_relative_eq!(c.plane_depth(0.0), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn plane_fills_frustum() {
        let img = render_scene(&[], Some(0.3), &cam());
        assert!(img.data().iter().all(|&d| (d - 0.5).abs() < 1e-6));
        let empty = render_scene(&[], None, &cam());
        assert_eq!(empty.foreground_count(), 0);
    }

    #[test]
    fn project_inverts_deproject() {
        let c = cam();
        let p = c.world_point(10.0, 100.0, 0.47);
        let (u, v, d) = c.project(&p).unwrap();
        assert_relative_eq!(u, 10.0, epsilon = 1e-9);
        assert_relative_eq!(v, 100.0, epsilon = 1e-9);
        assert_relative_eq!(d, 0.47, epsilon = 1e-12);
        // Image rows grow downward, i.e. toward -y in the world.
        assert!(c.world_point(64.0, 0.0, 0.5).y > 0.0);
        assert!(c.world_point(127.0, 64.0, 0.5).x > 0.0);
    }

    #[test]
    fn optical_axis_pixel() {
        let c = cam();
        let mut img = DepthImage::zeros(128, 128);
        img.set(64, 64, 0.5);
        let cloud = deproject(&img, &c, None).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12);
        assert_relative_eq!(p.z, 0.3, epsilon = 1e-7);
        assert!(deproject(&DepthImage::zeros(128, 128), &c, None)
            .unwrap()
            .is_empty());
        assert!(matches!(
            deproject(&DepthImage::zeros(64, 64), &c, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kndi_round_trip_and_errors() {
        let img = DepthImage::from_data(3, 2, vec![0.0, 0.5, 1.0, 0.25, 0.0, 2.0]).unwrap();
        let bytes = img.to_kndi_bytes();
        assert_eq!(&bytes[..4], b"KNDI");
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(DepthImage::from_kndi_bytes(&bytes).unwrap(), img);
        assert!(DepthImage::from_kndi_bytes(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DepthImage::from_kndi_bytes(&bad).is_err());
        assert!(DepthImage::from_data(1, 1, vec![-1.0]).is_err());
        assert!(DepthImage::from_data(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn png_export_decodes_to_millimeters() {
        let img = DepthImage::from_data(2, 1, vec![0.5, 0.0]).unwrap();
        let mut buf = Vec::new();
        img.write_png16(&mut buf).unwrap();
        let dec = png::Decoder::new(std::io::Cursor::new(buf));
        let mut reader = dec.read_info().unwrap();
        let mut out = vec![0u8; reader.output_buffer_size().unwrap()];
        reader.next_frame(&mut out).unwrap();
        assert_eq!(u16::from_be_bytes([out[0], out[1]]), 500);
        assert_eq!(u16::from_be_bytes([out[2], out[3]]), 0);
    }

    #[test]
    fn cube_round_trip_stays_on_surface() {
        let c = cam();
        let cube = box_mesh([0.1, 0.1, 0.1]);
        let pose = Pose::new(
            crate::so3::UnitQuaternion::rot_x(0.3).compose(&crate::so3::UnitQuaternion::rot_z(0.5)),
            Vec3::new(0.01, -0.02, 0.3),
        );
        let img = render_depth(&cube, &pose, &c);
        assert!(img.foreground_count() > 100);
        let cloud = deproject(&img, &c, None).unwrap();
        let inv = pose.inverse();
        for p in &cloud.points {
            let q = inv.apply(p);
            // Distance to the cube surface: largest coordinate equals 0.05.
            let m = q.x.abs().max(q.y.abs()).max(q.z.abs());
            assert!(
                (m - 0.05).abs() < 1e-4,
                "point off surface by {}",
                (m - 0.05).abs()
            );
        }
    }

    #[test]
    fn segmentation_of_plane_and_slack() {
        let c = cam();
        let cube = box_mesh([0.1, 0.1, 0.1]);
        let on_plane = Pose::from_translation(Vec3::new(0.0, 0.0, 0.05));
        let img = render_scene(
            &[Placed {
                mesh: &cube,
                pose: on_plane,
            }],
            Some(0.0),
            &c,
        );
        let plane_only = render_scene(&[], Some(0.0), &c);
        assert_eq!(segment_workspace(&plane_only, 0.8, 0.002).count(), 0);
        let mask = segment_workspace(&img, 0.8, 0.002);
        assert!(mask.count() > 0);
        assert_eq!(segment_workspace(&img, 0.8, f64::INFINITY).count(), 0);
    }

    #[test]
    fn crop_constant_disk_stays_constant() {
        let mut img = DepthImage::zeros(64, 64);
        for v in 0..64u32 {
            for u in 0..64u32 {
                let (du, dv) = (u as f64 - 30.0, v as f64 - 34.0);
                if du * du + dv * dv <= 100.0 {
                    img.set(u, v, 0.42);
                }
            }
        }
        let c = crop_and_resize(&img, (30.0, 34.0), 0.2, 48).unwrap();
        assert!(c.foreground_count() > 0);
        assert!(c
            .data()
            .iter()
            .all(|&d| d == 0.0 || (d - 0.42).abs() < 1e-6));
        assert!(matches!(
            crop_and_resize(&DepthImage::zeros(8, 8), (4.0, 4.0), 0.1, 8),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn tight_crop_touches_footprint() {
        let mut img = DepthImage::zeros(40, 40);
        for v in 10..20 {
            for u in 10..20 {
                img.set(u, v, 1.0);
            }
        }
        // Identity resampling of the 10 x 10 footprint.
        let c = crop_and_resize(&img, (14.5, 14.5), 0.0, 10).unwrap();
        assert_eq!(c.foreground_count(), 100);
        let wider = crop_and_resize(&img, (14.5, 14.5), 0.25, 10).unwrap();
        assert!(wider.foreground_count() < 100);
    }

    #[test]
    fn splat_keeps_nearest() {
        let c = cam();
        let near = c.world_point(20.0, 30.0, 0.4);
        let far = c.world_point(20.0, 30.0, 0.6);
        let img = project_cloud(&PointCloud::new(vec![far, near]), &c);
        assert_relative_eq!(img.get(20, 30), 0.4, epsilon = 1e-6);
        assert_eq!(img.foreground_count(), 1);
    }
}
