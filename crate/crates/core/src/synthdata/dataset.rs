//! Dataset splitting, on-disk format, and capture-session generation.
//!
//! Directory layout:
//!
//! ```text
//! <root>/
//!   dataset.json    manifest with schema version, counts, config echo
//!   rig.json        camera array (name, K, R, t, width, height)
//!   frames.jsonl    one record per (frame, camera) with optional poses
//!   images/         raw little-endian float32 files, [3,H,W] row-major
//! ```
//!
//! Labeled-secondary frames carry full 2-D/3-D truth, labeled-primary
//! frames carry the primary blocks only, and unlabeled frames are stripped
//! of every pose field in serialized form. Test frames keep full truth and
//! never enter the training splits.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::Image;
use crate::error::{CoreError, Result};
use crate::geometry::{save_rig, CameraParams, CoordUnits, Pose2D, Pose3D};
use crate::tensor::Tensor;

use super::render::{render, sample_clutter, sample_color_jitter, NoiseConfig};
use super::{build_rig, default_skeleton, frame_seed, place_pose, sample_pose, PoseModel, SkeletonSpec, DEFAULT_ANGLE_SCALE};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// D_X: both primary and secondary labels.
    LabeledFull,
    /// D_Z \ D_X: primary labels only.
    LabeledPrimary,
    /// D_X^U: multiview images without any annotation.
    Unlabeled,
    /// Held-out evaluation frames with full truth.
    Test,
}

/// Frame-id assignment of the training pool. `labeled_primary` is D_Z and
/// always contains `labeled_secondary` (D_X).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub labeled_primary: Vec<u64>,
    pub labeled_secondary: Vec<u64>,
    pub unlabeled: Vec<u64>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_primary.len() < self.labeled_secondary.len() {
            return Err(CoreError::Dataset {
                reason: format!(
                    "labeled-primary set ({}) smaller than labeled-secondary set ({})",
                    self.labeled_primary.len(),
                    self.labeled_secondary.len()
                ),
            });
        }
        Ok(())
    }
}

/// Deterministic split of the given frame ids. `label_ratio` fixes
/// `|D_X| = round(ratio * n)` exactly; the primary-labeled pool D_Z is twice
/// that (capped at every frame), reflecting primary annotations being more
/// plentiful than secondary ones.
pub fn make_splits(frame_ids: &[u64], label_ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(label_ratio > 0.0 && label_ratio <= 1.0) {
        return Err(CoreError::InvalidConfig {
            reason: format!("label ratio must be in (0, 1], got {label_ratio}"),
        });
    }
    let n = frame_ids.len();
    let nx = (label_ratio * n as f64).round() as usize;
    if nx == 0 {
        return Err(CoreError::Dataset {
            reason: format!("label ratio {label_ratio} yields zero labeled frames out of {n}"),
        });
    }
    let mut order: Vec<u64> = frame_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5117);
    order.shuffle(&mut rng);
    let nz = (2 * nx).min(n);
    let split = DatasetSplit {
        labeled_secondary: order[..nx].to_vec(),
        labeled_primary: order[..nz].to_vec(),
        unlabeled: order[nz..].to_vec(),
    };
    split.validate()?;
    Ok(split)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub frames: usize,
    pub cameras: usize,
    pub seed: u64,
    pub label_ratio: f64,
    pub test_fraction: f64,
    pub image_size: usize,
    pub focal: f64,
    pub rig_radius: f64,
    pub rig_height: f64,
    /// Camera arc in degrees; full ring when absent.
    pub rig_arc_degrees: Option<f64>,
    pub angle_scale: f64,
    pub translation_range: f64,
    /// Skip image files for pose-only studies.
    pub write_images: bool,
    pub noise: NoiseConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            frames: 1000,
            cameras: 4,
            seed: 7,
            label_ratio: 0.1,
            test_fraction: 0.15,
            image_size: 64,
            focal: 50.0,
            rig_radius: 3.0,
            rig_height: 0.6,
            rig_arc_degrees: None,
            angle_scale: DEFAULT_ANGLE_SCALE,
            translation_range: 0.35,
            write_images: true,
            noise: NoiseConfig::default(),
        }
    }
}

impl GenerateConfig {
    /// Keep the subject footprint constant when the sensor size changes.
    pub fn with_image_size(mut self, size: usize) -> Self {
        self.focal *= size as f64 / self.image_size as f64;
        self.image_size = size;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCounts {
    pub labeled_secondary: usize,
    pub labeled_primary: usize,
    pub unlabeled: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub config: GenerateConfig,
    pub skeleton: SkeletonSpec,
    pub splits: SplitCounts,
    /// SHA-256 over rig.json and frames.jsonl.
    pub content_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameRecord {
    frame: u64,
    camera: usize,
    split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    primary2d: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    primary_vis: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    secondary2d: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    secondary_vis: Option<Vec<bool>>,
    /// World-frame 3-D truth, written on the first camera record only.
    #[serde(skip_serializing_if = "Option::is_none")]
    primary3d: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    secondary3d: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observed_primary2d: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observed_secondary2d: Option<Vec<[f64; 2]>>,
}

/// 2-D labels for one block with visibility flags.
#[derive(Debug, Clone)]
pub struct LabeledPoints2D {
    pub coords: Vec<Vector2<f64>>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ViewData {
    pub camera: usize,
    pub image_path: Option<PathBuf>,
    pub primary2d: Option<LabeledPoints2D>,
    pub secondary2d: Option<LabeledPoints2D>,
    pub observed_primary2d: Option<Vec<Vector2<f64>>>,
    pub observed_secondary2d: Option<Vec<Vector2<f64>>>,
}

impl ViewData {
    /// Full 2-D truth when both blocks are labeled.
    pub fn pose2d(&self) -> Option<Pose2D> {
        let p = self.primary2d.as_ref()?;
        let s = self.secondary2d.as_ref()?;
        Some(Pose2D {
            primary: p.coords.clone(),
            secondary: s.coords.clone(),
            primary_visible: p.visible.clone(),
            secondary_visible: s.visible.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FrameData {
    pub id: u64,
    pub split: Split,
    pub primary3d: Option<Vec<Vector3<f64>>>,
    pub secondary3d: Option<Vec<Vector3<f64>>>,
    pub views: Vec<ViewData>,
}

impl FrameData {
    pub fn pose3d(&self) -> Option<Pose3D> {
        Some(Pose3D {
            primary: self.primary3d.clone()?,
            secondary: self.secondary3d.clone()?,
            units: CoordUnits::World,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub skeleton: SkeletonSpec,
    pub cameras: Vec<CameraParams>,
    pub frames: Vec<FrameData>,
    pub root: PathBuf,
}

impl Dataset {
    pub fn frames_in_split(&self, split: Split) -> impl Iterator<Item = &FrameData> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    /// Training-pool frames with at least primary labels (D_Z = D_X ∪ D_Z').
    pub fn labeled_frames(&self) -> Vec<&FrameData> {
        self.frames
            .iter()
            .filter(|f| matches!(f.split, Split::LabeledFull | Split::LabeledPrimary))
            .collect()
    }

    /// Every non-test multiview frame (the paper's D), used for pair sampling.
    pub fn multiview_pool(&self) -> Vec<&FrameData> {
        self.frames.iter().filter(|f| f.split != Split::Test).collect()
    }

    pub fn load_image(&self, view: &ViewData) -> Result<Image> {
        let rel = view.image_path.as_ref().ok_or_else(|| CoreError::Dataset {
            reason: "view has no image file".into(),
        })?;
        let size = self.manifest.config.image_size;
        load_image(&self.root.join(rel), size, size)
    }
}

fn vec2s(points: &[Vector2<f64>]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

fn vec3s(points: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    let mut bytes = Vec::with_capacity(image.data.len() * 4);
    for &v in image.data.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_image(path: &Path, height: usize, width: usize) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    let expect = 3 * height * width * 4;
    if bytes.len() != expect {
        return Err(CoreError::Dataset {
            reason: format!("image file {} has {} bytes, expected {expect}", path.display(), bytes.len()),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image::new(Tensor::new(vec![3, height, width], values)?)
}

/// Generate a full synthetic capture session into `out_dir`.
pub fn generate_dataset(config: &GenerateConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if config.frames == 0 {
        return Err(CoreError::InvalidConfig { reason: "frame count must be positive".into() });
    }
    let spec = default_skeleton();
    spec.validate()?;
    let model = PoseModel::default_for(&spec, config.angle_scale);
    let cams = build_rig(
        config.cameras,
        config.rig_radius,
        config.rig_height,
        config.image_size,
        config.focal,
        config.rig_arc_degrees.map(f64::to_radians),
    )?;

    std::fs::create_dir_all(out_dir)?;
    if config.write_images {
        std::fs::create_dir_all(out_dir.join("images"))?;
    }
    save_rig(&cams, &out_dir.join("rig.json"))?;

    // test frames first, then the training pool is split by label ratio
    let all_ids: Vec<u64> = (0..config.frames as u64).collect();
    let mut order = all_ids.clone();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7e57);
    order.shuffle(&mut split_rng);
    let n_test = (config.test_fraction * config.frames as f64).round() as usize;
    let test_ids: Vec<u64> = order[..n_test].to_vec();
    let pool: Vec<u64> = order[n_test..].to_vec();
    let split = make_splits(&pool, config.label_ratio, config.seed)?;

    let mut assignment: BTreeMap<u64, Split> = BTreeMap::new();
    for &id in &test_ids {
        assignment.insert(id, Split::Test);
    }
    for &id in &split.unlabeled {
        assignment.insert(id, Split::Unlabeled);
    }
    for &id in &split.labeled_primary {
        assignment.insert(id, Split::LabeledPrimary);
    }
    for &id in &split.labeled_secondary {
        assignment.insert(id, Split::LabeledFull);
    }

    let frames_path = out_dir.join("frames.jsonl");
    let mut writer = BufWriter::new(std::fs::File::create(&frames_path)?);
    for frame_id in 0..config.frames as u64 {
        let split = assignment[&frame_id];
        let body = sample_pose(&spec, &model, frame_seed(config.seed, frame_id))?;
        let mut frame_rng = ChaCha8Rng::seed_from_u64(frame_seed(config.seed ^ 0xa5a5, frame_id));
        let placed = place_pose(&body, &mut frame_rng, config.translation_range);
        let jitter = sample_color_jitter(&spec, &config.noise, &mut frame_rng);
        let clutter = sample_clutter(&placed, &config.noise, &mut frame_rng);

        for (cam_idx, cam) in cams.iter().enumerate() {
            let mut view_rng = ChaCha8Rng::seed_from_u64(frame_seed(
                config.seed ^ 0xc0de ^ ((cam_idx as u64) << 32),
                frame_id,
            ));
            let mut image_rel = None;
            let rendered = if config.write_images {
                let out = render(&placed, cam, &spec, &config.noise, &jitter, &clutter, &mut view_rng)?;
                let rel = format!("images/f{frame_id:06}_c{cam_idx}.f32");
                save_image(&out_dir.join(&rel), &out.image)?;
                image_rel = Some(rel);
                Some(out)
            } else {
                Some(render_poses_only(&placed, cam, &spec, &config.noise, &mut view_rng)?)
            };
            let rendered = rendered.expect("always rendered");

            let (with_primary, with_secondary) = match split {
                Split::LabeledFull | Split::Test => (true, true),
                Split::LabeledPrimary => (true, false),
                Split::Unlabeled => (false, false),
            };
            let record = FrameRecord {
                frame: frame_id,
                camera: cam_idx,
                split,
                image: image_rel,
                primary2d: with_primary.then(|| vec2s(&rendered.truth.primary)),
                primary_vis: with_primary.then(|| rendered.truth.primary_visible.clone()),
                secondary2d: with_secondary.then(|| vec2s(&rendered.truth.secondary)),
                secondary_vis: with_secondary.then(|| rendered.truth.secondary_visible.clone()),
                primary3d: (with_primary && cam_idx == 0).then(|| vec3s(&placed.primary)),
                secondary3d: (with_secondary && cam_idx == 0).then(|| vec3s(&placed.secondary)),
                observed_primary2d: rendered
                    .observed
                    .as_ref()
                    .filter(|_| with_primary)
                    .map(|o| vec2s(&o.primary)),
                observed_secondary2d: rendered
                    .observed
                    .as_ref()
                    .filter(|_| with_secondary)
                    .map(|o| vec2s(&o.secondary)),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()?;
    drop(writer);

    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(out_dir.join("rig.json"))?);
    hasher.update(std::fs::read(&frames_path)?);
    let content_hash = hex_digest(hasher);

    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        config: config.clone(),
        skeleton: spec,
        splits: SplitCounts {
            labeled_secondary: split.labeled_secondary.len(),
            labeled_primary: split.labeled_primary.len(),
            unlabeled: split.unlabeled.len(),
            test: test_ids.len(),
        },
        content_hash,
    };
    std::fs::write(out_dir.join("dataset.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Pose-only path: identical truth bookkeeping without touching pixels.
fn render_poses_only(
    pose: &Pose3D,
    cam: &CameraParams,
    spec: &SkeletonSpec,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<super::render::Rendered> {
    let truth = super::render::project_truth(pose, cam, spec).1;
    let observed = super::render::observe_with_noise(&truth, noise, rng);
    Ok(super::render::Rendered {
        image: Image::new(Tensor::zeros(&[3, 1, 1]))?,
        truth,
        observed,
    })
}

fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest_raw = std::fs::read_to_string(root.join("dataset.json")).map_err(|e| {
        CoreError::Dataset { reason: format!("{}: {e}", root.join("dataset.json").display()) }
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_raw)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(CoreError::SchemaVersion {
            expected: DATASET_SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }
    let cameras = crate::geometry::load_rig(&root.join("rig.json"))?;
    let skeleton = manifest.skeleton.clone();
    skeleton.validate()?;

    let file = std::fs::File::open(root.join("frames.jsonl"))?;
    let reader = std::io::BufReader::new(file);
    let mut frames: BTreeMap<u64, FrameData> = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line)?;
        if rec.split == Split::Unlabeled
            && (rec.primary2d.is_some()
                || rec.secondary2d.is_some()
                || rec.primary3d.is_some()
                || rec.secondary3d.is_some())
        {
            return Err(CoreError::Dataset {
                reason: format!("unlabeled frame {} carries pose fields", rec.frame),
            });
        }
        let entry = frames.entry(rec.frame).or_insert_with(|| FrameData {
            id: rec.frame,
            split: rec.split,
            primary3d: None,
            secondary3d: None,
            views: Vec::new(),
        });
        if let Some(p3) = &rec.primary3d {
            entry.primary3d = Some(p3.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect());
        }
        if let Some(s3) = &rec.secondary3d {
            entry.secondary3d = Some(s3.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect());
        }
        let labeled = |coords: &Option<Vec<[f64; 2]>>, vis: &Option<Vec<bool>>| -> Option<LabeledPoints2D> {
            coords.as_ref().map(|c| LabeledPoints2D {
                coords: c.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
                visible: vis.clone().unwrap_or_else(|| vec![true; c.len()]),
            })
        };
        entry.views.push(ViewData {
            camera: rec.camera,
            image_path: rec.image.map(PathBuf::from),
            primary2d: labeled(&rec.primary2d, &rec.primary_vis),
            secondary2d: labeled(&rec.secondary2d, &rec.secondary_vis),
            observed_primary2d: rec
                .observed_primary2d
                .map(|v| v.iter().map(|p| Vector2::new(p[0], p[1])).collect()),
            observed_secondary2d: rec
                .observed_secondary2d
                .map(|v| v.iter().map(|p| Vector2::new(p[0], p[1])).collect()),
        });
        entry.views.sort_by_key(|v| v.camera);
    }

    let frames: Vec<FrameData> = frames.into_values().collect();
    let n_full = frames.iter().filter(|f| f.split == Split::LabeledFull).count();
    let n_prim = frames
        .iter()
        .filter(|f| matches!(f.split, Split::LabeledFull | Split::LabeledPrimary))
        .count();
    if n_prim < n_full {
        return Err(CoreError::Dataset { reason: "labeled-primary pool smaller than labeled-secondary".into() });
    }
    Ok(Dataset { manifest, skeleton, cameras, frames, root: root.to_path_buf() })
}
