//! Self-supervised rotation-pair datasets.
//!
//! Each record renders one object twice: at a uniformly random rotation
//! `R^s` and at `R^g = B R^s`, where `B` is a bounded random rotation. The
//! label is `B` expressed in the camera-aligned frame centered on the
//! object centroid, so `R^g = label * R^s` whenever the camera is not
//! rotated. Both renders get an independent translation jitter, then
//! cropping, pixel dropout and rectangular cuts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::render::{crop_and_resize, render_depth, CameraModel, DepthImage};
use crate::rng::stream;
use crate::so3::{deg, rad, sample_bounded, sample_uniform, Pose, UnitQuaternion, Vec3};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// The object itself is rendered in both poses.
    Conformal,
    /// The minimum-volume box of the posed object is rendered instead.
    Prismatic,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Conformal => "CONFORMAL",
            Variant::Prismatic => "PRISMATIC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropConfig {
    /// Margin over the object's pixel extent, drawn uniformly from this range.
    pub margin_range: [f64; 2],
    /// Maximum offset of the crop center from the foreground center, pixels
    /// per axis.
    pub center_offset: f64,
    pub out_size: u32,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            margin_range: [0.05, 0.25],
            center_offset: 5.0,
            out_size: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub pixel_dropout_fraction: f64,
    /// Cut width as a fraction of the image width.
    pub cut_width_fraction: f64,
    /// Cut height as a fraction of the image height, drawn uniformly.
    pub cut_height_range: [f64; 2],
    pub cut_count: u32,
    /// Half-range in meters of the per-axis translation jitter applied to
    /// the object before rendering.
    pub translation_range: f64,
    pub crop: Option<CropConfig>,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            pixel_dropout_fraction: 0.01,
            cut_width_fraction: 0.30,
            cut_height_range: [0.10, 0.30],
            cut_count: 1,
            translation_range: 0.05,
            crop: Some(CropConfig::default()),
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        AugmentationConfig {
            pixel_dropout_fraction: 0.0,
            cut_width_fraction: 0.0,
            cut_height_range: [0.0, 0.0],
            cut_count: 0,
            translation_range: 0.0,
            crop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        let range = |r: [f64; 2]| r[0] <= r[1] && r[0] >= 0.0;
        let mut ok = frac(self.pixel_dropout_fraction)
            && frac(self.cut_width_fraction)
            && range(self.cut_height_range)
            && frac(self.cut_height_range[1])
            && self.translation_range >= 0.0
            && self.translation_range.is_finite();
        if let Some(c) = &self.crop {
            ok &= range(c.margin_range) && c.center_offset >= 0.0 && c.out_size > 0;
        }
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid augmentation config {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub pairs_per_mesh: usize,
    pub variant: Variant,
    /// Bound on the relative rotation angle, degrees.
    pub max_angle_deg: f64,
    /// World height of the object centroid before jitter, meters.
    pub hold_height: f64,
    pub camera: CameraModel,
    pub augmentation: AugmentationConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            pairs_per_mesh: 64,
            variant: Variant::Conformal,
            max_angle_deg: 30.0,
            hold_height: 0.3,
            camera: CameraModel::default(),
            augmentation: AugmentationConfig::default(),
        }
    }
}

/// One labeled pair of depth images.
#[derive(Debug, Clone)]
pub struct RotationPairRecord {
    pub image_start: DepthImage,
    pub image_goal: DepthImage,
    /// Relative rotation in the camera-aligned object frame.
    pub label: UnitQuaternion,
    pub mesh_id: String,
    pub variant: Variant,
    /// World rotation of the object in the start image.
    pub rotation_start: UnitQuaternion,
    /// World positions of the object centroid in the two renders.
    pub center_start: Vec3,
    pub center_goal: Vec3,
}

impl RotationPairRecord {
    pub fn angle_deg(&self) -> f64 {
        deg(self.label.angle())
    }
}

fn jitter<R: Rng + ?Sized>(range: f64, rng: &mut R) -> Vec3 {
    if range == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(
        rng.random_range(-range..=range),
        rng.random_range(-range..=range),
        rng.random_range(-range..=range),
    )
}

/// Renders `mesh` rotated by `rotation` about its centroid with the centroid
/// at `center`.
pub fn render_variant(
    mesh: &TriMesh,
    rotation: &UnitQuaternion,
    center: &Vec3,
    variant: Variant,
    camera: &CameraModel,
) -> Result<DepthImage> {
    let c = mesh.centroid();
    let pose = Pose::new(*rotation, center - rotation.apply(&c));
    let img = match variant {
        Variant::Conformal => render_depth(mesh, &pose, camera),
        Variant::Prismatic => {
            let obb = mesh.obb()?.transformed(&pose);
            render_depth(&obb.to_mesh(), &Pose::identity(), camera)
        }
    };
    Ok(img)
}

/// Record for explicitly chosen start rotation and relative rotation
/// `relative` (world frame).
#[allow(clippy::too_many_arguments)]
pub fn generate_pair_with<R: Rng + ?Sized>(
    mesh: &TriMesh,
    mesh_id: &str,
    camera: &CameraModel,
    variant: Variant,
    aug: &AugmentationConfig,
    hold_height: f64,
    rotation_start: UnitQuaternion,
    relative: UnitQuaternion,
    rng: &mut R,
) -> Result<RotationPairRecord> {
    let rotation_goal = relative.compose(&rotation_start);
    let hold = Vec3::new(0.0, 0.0, hold_height);
    let center_start = hold + jitter(aug.translation_range, rng);
    let center_goal = hold + jitter(aug.translation_range, rng);
    let raw_s = render_variant(mesh, &rotation_start, &center_start, variant, camera)?;
    let raw_g = render_variant(mesh, &rotation_goal, &center_goal, variant, camera)?;
    if raw_s.foreground_count() == 0 || raw_g.foreground_count() == 0 {
        return Err(Error::EmptyForeground);
    }
    let image_start = augment(&raw_s, aug, rng)?;
    let image_goal = augment(&raw_g, aug, rng)?;
    let cam_rot = camera.pose.rotation;
    let label = cam_rot.inverse().compose(&relative).compose(&cam_rot);
    Ok(RotationPairRecord {
        image_start,
        image_goal,
        label,
        mesh_id: mesh_id.to_string(),
        variant,
        rotation_start,
        center_start,
        center_goal,
    })
}

/// Draws `R^s` uniformly and `R^g = B R^s` with `angle(B) < max_angle_deg`.
pub fn generate_pair<R: Rng + ?Sized>(
    mesh: &TriMesh,
    mesh_id: &str,
    cfg: &DatasetConfig,
    rng: &mut R,
) -> Result<RotationPairRecord> {
    let rotation_start = sample_uniform(rng);
    let relative = sample_bounded(rng, rad(cfg.max_angle_deg))?;
    generate_pair_with(
        mesh,
        mesh_id,
        &cfg.camera,
        cfg.variant,
        &cfg.augmentation,
        cfg.hold_height,
        rotation_start,
        relative,
        rng,
    )
}

/// Crop (if configured), then pixel dropout, then rectangular cuts. Cut
/// sizes are relative to the output raster.
pub fn augment<R: Rng + ?Sized>(
    image: &DepthImage,
    aug: &AugmentationConfig,
    rng: &mut R,
) -> Result<DepthImage> {
    let mut out = match &aug.crop {
        Some(c) => {
            let (cu, cv) = image.foreground_center().ok_or(Error::EmptyForeground)?;
            let margin = if c.margin_range[1] > c.margin_range[0] {
                rng.random_range(c.margin_range[0]..c.margin_range[1])
            } else {
                c.margin_range[0]
            };
            let (du, dv) = if c.center_offset > 0.0 {
                (
                    rng.random_range(-c.center_offset..=c.center_offset),
                    rng.random_range(-c.center_offset..=c.center_offset),
                )
            } else {
                (0.0, 0.0)
            };
            crop_and_resize(image, (cu + du, cv + dv), margin, c.out_size)?
        }
        None => image.clone(),
    };
    if aug.pixel_dropout_fraction > 0.0 {
        for px in out.data_mut() {
            if rng.random_bool(aug.pixel_dropout_fraction) {
                *px = 0.0;
            }
        }
    }
    let (w, h) = (out.width(), out.height());
    let cut_w = ((aug.cut_width_fraction * w as f64).round() as u32).min(w);
    for _ in 0..aug.cut_count {
        if cut_w == 0 {
            break;
        }
        let [lo, hi] = aug.cut_height_range;
        let frac = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let cut_h = ((frac * h as f64).round() as u32).min(h);
        let u0 = rng.random_range(0..=w - cut_w);
        let v0 = rng.random_range(0..=h - cut_h);
        for v in v0..v0 + cut_h {
            for u in u0..u0 + cut_w {
                out.set(u, v, 0.0);
            }
        }
    }
    Ok(out)
}

/// One line of `index.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub record_id: String,
    pub mesh_id: String,
    pub variant: Variant,
    pub quat_wxyz: [f64; 4],
    pub angle_deg: f64,
    pub start_wxyz: [f64; 4],
    pub center_start: [f64; 3],
    pub center_goal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshShard {
    pub mesh_id: String,
    pub records: usize,
    /// SHA-256 over the shard's index and rasters, in record order.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub total_records: usize,
    pub meshes: Vec<MeshShard>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of the serialized manifest.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn shard_path(out_dir: &Path, mesh_id: &str) -> PathBuf {
    out_dir.join(mesh_id)
}

fn write_shard(
    mesh_id: &str,
    mesh: &TriMesh,
    cfg: &DatasetConfig,
    out_dir: &Path,
    seed: u64,
) -> Result<MeshShard> {
    let dir = shard_path(out_dir, mesh_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut rng = stream(seed, mesh_id);
    let mut hasher = Sha256::new();
    let mut index = Vec::new();
    for i in 0..cfg.pairs_per_mesh {
        let rec = generate_pair(mesh, mesh_id, cfg, &mut rng)?;
        let s = rec.image_start.to_kndi_bytes();
        let g = rec.image_goal.to_kndi_bytes();
        for (suffix, bytes) in [("s", &s), ("g", &g)] {
            let path = dir.join(format!("{i:04}_{suffix}.kndi"));
            fs::write(&path, bytes)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            hasher.update(bytes);
        }
        let entry = IndexEntry {
            record_id: format!("{mesh_id}/{i:04}"),
            mesh_id: mesh_id.to_string(),
            variant: rec.variant,
            quat_wxyz: rec.label.wxyz(),
            angle_deg: rec.angle_deg(),
            start_wxyz: rec.rotation_start.wxyz(),
            center_start: rec.center_start.into(),
            center_goal: rec.center_goal.into(),
        };
        serde_json::to_writer(&mut index, &entry)?;
        index.push(b'\n');
    }
    hasher.update(&index);
    let path = dir.join("index.jsonl");
    let mut f = fs::File::create(&path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&index)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(MeshShard {
        mesh_id: mesh_id.to_string(),
        records: cfg.pairs_per_mesh,
        digest: hex::encode(hasher.finalize()),
    })
}

/// Writes one shard directory per mesh plus `manifest.json`. Output depends
/// only on the corpus, `cfg` and `seed`.
pub fn generate_dataset(
    corpus: &[(String, TriMesh)],
    cfg: &DatasetConfig,
    out_dir: &Path,
    seed: u64,
) -> Result<DatasetManifest> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("corpus is empty".into()));
    }
    cfg.augmentation.validate()?;
    cfg.camera.validate()?;
    if !(cfg.max_angle_deg > 0.0 && cfg.max_angle_deg <= 180.0) {
        return Err(Error::Config(format!(
            "max_angle_deg must lie in (0, 180], got {}",
            cfg.max_angle_deg
        )));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let job = |(id, mesh): &(String, TriMesh)| write_shard(id, mesh, cfg, out_dir, seed);
    #[cfg(feature = "parallel")]
    let shards: Result<Vec<MeshShard>> = corpus.par_iter().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let shards: Result<Vec<MeshShard>> = corpus.iter().map(job).collect();
    let meshes = shards?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        seed,
        config: *cfg,
        total_records: meshes.iter().map(|m| m.records).sum(),
        meshes,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, manifest.to_json())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(manifest)
}

/// Reads `index.jsonl` of one shard directory.
pub fn read_index(shard_dir: &Path) -> Result<Vec<IndexEntry>> {
    let path = shard_dir.join("index.jsonl");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{box_mesh, extrude_polygon, l_outline};
    use crate::rng::seeded;
    use crate::so3::geodesic_angle;

    fn l_mesh() -> TriMesh {
        extrude_polygon(&l_outline(0.12, 0.08, 0.03), 0.04)
    }

    #[test]
    fn equal_rotations_give_identity_label_and_equal_images() {
        let mesh = l_mesh();
        let r = sample_uniform(&mut seeded(3));
        let rec = generate_pair_with(
            &mesh,
            "l",
            &CameraModel::default(),
            Variant::Conformal,
            &AugmentationConfig::disabled(),
            0.3,
            r,
            UnitQuaternion::IDENTITY,
            &mut seeded(4),
        )
        .unwrap();
        assert!(rec.label.approx_eq(&UnitQuaternion::IDENTITY, 1e-12));
        assert_eq!(rec.image_start, rec.image_goal);
    }

    #[test]
    fn labels_respect_bound() {
        let mesh = box_mesh([0.1, 0.06, 0.04]);
        let cfg = DatasetConfig {
            augmentation: AugmentationConfig::disabled(),
            ..Default::default()
        };
        let mut rng = seeded(11);
        for _ in 0..50 {
            let rec = generate_pair(&mesh, "b", &cfg, &mut rng).unwrap();
            assert!(rec.angle_deg() < 30.0);
            let goal = rec.label.compose(&rec.rotation_start);
            assert!(geodesic_angle(&goal, &rec.rotation_start) < rad(30.0));
        }
    }

    #[test]
    fn dropout_extremes() {
        let img = DepthImage::from_data(4, 4, vec![0.5; 16]).unwrap();
        let none = AugmentationConfig::disabled();
        assert_eq!(augment(&img, &none, &mut seeded(1)).unwrap(), img);
        let all = AugmentationConfig {
            pixel_dropout_fraction: 1.0,
            ..none
        };
        assert_eq!(
            augment(&img, &all, &mut seeded(1))
                .unwrap()
                .foreground_count(),
            0
        );
    }

    #[test]
    fn cut_has_configured_width() {
        let img = DepthImage::from_data(20, 20, vec![0.5; 400]).unwrap();
        let aug = AugmentationConfig {
            cut_width_fraction: 0.3,
            cut_height_range: [0.5, 0.5],
            cut_count: 1,
            ..AugmentationConfig::disabled()
        };
        let out = augment(&img, &aug, &mut seeded(2)).unwrap();
        assert_eq!(400 - out.foreground_count(), 6 * 10);
    }

    #[test]
    fn prismatic_box_matches_conformal_box() {
        let mesh = box_mesh([0.1, 0.06, 0.04]);
        let cam = CameraModel::default();
        let r = UnitQuaternion::rot_x(0.4);
        let c = Vec3::new(0.0, 0.0, 0.3);
        let a = render_variant(&mesh, &r, &c, Variant::Conformal, &cam).unwrap();
        let b = render_variant(&mesh, &r, &c, Variant::Prismatic, &cam).unwrap();
        let differing = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| (**x - **y).abs() > 1e-4)
            .count();
        assert!(differing <= 4, "{differing} pixels differ");
    }
}
