//! Toy image renderer: landmarks as Gaussian color blobs over a noisy
//! background, with faint bone segments and clutter blobs near the
//! secondary color family.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Image;
use crate::error::Result;
use crate::geometry::{project, CameraParams, Pose2D, Pose3D};
use crate::tensor::Tensor;

use super::{LandmarkKind, SkeletonSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Gaussian blob radius in pixels.
    pub blob_sigma: f64,
    /// Peak intensity of primary landmark blobs.
    pub primary_strength: f64,
    /// Peak intensity of secondary landmark blobs.
    pub secondary_strength: f64,
    /// Std-dev of additive background noise.
    pub background_sigma: f64,
    /// Base background level.
    pub background_level: f64,
    /// Per-frame, per-landmark color jitter amplitude.
    pub color_jitter: f64,
    /// Number of clutter blobs drawn in secondary-like colors.
    pub distractors: usize,
    /// Peak intensity of clutter blobs.
    pub distractor_strength: f64,
    /// Intensity of bone segments.
    pub bone_strength: f64,
    /// Std-dev of optional pixel noise on the observed (not truth) 2-D
    /// coordinates; zero disables the noisy channel.
    pub pixel_noise_px: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            blob_sigma: 1.5,
            primary_strength: 0.95,
            secondary_strength: 0.45,
            background_sigma: 0.04,
            background_level: 0.06,
            color_jitter: 0.08,
            distractors: 5,
            distractor_strength: 0.5,
            bone_strength: 0.10,
            pixel_noise_px: 0.0,
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Fixed per-landmark color signatures, tree order. Primaries get vivid,
/// well-separated hues; secondaries share a narrow green band so that
/// telling them apart needs spatial context rather than color alone.
pub fn landmark_palette(spec: &SkeletonSpec) -> Vec<[f64; 3]> {
    let n_primary = spec.num_primary();
    let mut prim_seen = 0usize;
    let mut sec_seen = 0usize;
    spec.landmarks
        .iter()
        .map(|lm| match lm.kind {
            LandmarkKind::Primary => {
                // skip the green band (90..150 deg) reserved for secondaries
                let t = prim_seen as f64 / n_primary as f64;
                prim_seen += 1;
                let hue = (155.0 + t * 295.0) % 360.0;
                hsv_to_rgb(hue, 0.9, 0.95)
            }
            LandmarkKind::Secondary => {
                // a 2.5-degree hue step is below the per-frame color jitter,
                // so secondary identities are only resolvable from context
                let hue = 112.0 + 2.5 * sec_seen as f64;
                sec_seen += 1;
                hsv_to_rgb(hue, 0.8, 0.75)
            }
        })
        .collect()
}

/// Per-frame color jitter, shared by every view of the frame.
pub fn sample_color_jitter(spec: &SkeletonSpec, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    spec.landmarks
        .iter()
        .map(|_| {
            [
                rng.random_range(-noise.color_jitter..=noise.color_jitter),
                rng.random_range(-noise.color_jitter..=noise.color_jitter),
                rng.random_range(-noise.color_jitter..=noise.color_jitter),
            ]
        })
        .collect()
}

/// World-space clutter attached near the body, shared by every view of the
/// frame. Because clutter is an actual 3-D point in secondary-like colors,
/// it stays multiview-consistent: cross-view triangulation alone cannot
/// reject it.
pub fn sample_clutter(
    pose: &Pose3D,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vector3<f64>, [f64; 3])> {
    let anchors = &pose.primary;
    (0..noise.distractors)
        .map(|_| {
            let anchor = anchors[rng.random_range(0..anchors.len())];
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let dir = if dir.norm() < 1e-9 { Vector3::new(1.0, 0.0, 0.0) } else { dir.normalize() };
            let point = anchor + dir * rng.random_range(0.2..0.5);
            let hue = 112.0 + rng.random_range(-6.0..18.0);
            (point, hsv_to_rgb(hue, 0.8, 0.75))
        })
        .collect()
}

struct Canvas {
    w: usize,
    h: usize,
    data: Vec<f64>, // [3, h, w]
}

impl Canvas {
    fn splat_blob(&mut self, center: Vector2<f64>, sigma: f64, color: [f64; 3], strength: f64) {
        let radius = (3.0 * sigma).ceil() as isize;
        let cx = center.x.round() as isize;
        let cy = center.y.round() as isize;
        for py in (cy - radius).max(0)..=(cy + radius).min(self.h as isize - 1) {
            for px in (cx - radius).max(0)..=(cx + radius).min(self.w as isize - 1) {
                let dx = px as f64 - center.x;
                let dy = py as f64 - center.y;
                let weight = strength * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                if weight < 1e-4 {
                    continue;
                }
                let idx = py as usize * self.w + px as usize;
                for (c, &col) in color.iter().enumerate() {
                    self.data[c * self.h * self.w + idx] += weight * col;
                }
            }
        }
    }

    fn splat_segment(&mut self, a: Vector2<f64>, b: Vector2<f64>, strength: f64) {
        let len = (b - a).norm();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let p = a + (b - a) * t;
            if p.x < 0.0 || p.y < 0.0 || p.x >= self.w as f64 || p.y >= self.h as f64 {
                continue;
            }
            self.splat_blob(p, 0.6, [1.0, 1.0, 1.0], strength);
        }
    }
}

/// Rendered view: the image, exact-projection 2-D truth, and (when pixel
/// noise is enabled) a noisy observation variant of the truth.
pub struct Rendered {
    pub image: Image,
    pub truth: Pose2D,
    pub observed: Option<Pose2D>,
}

/// Exact 2-D truth for every landmark: tree-ordered projections (None when
/// behind the camera) plus the block-structured pose with visibility.
pub fn project_truth(
    pose: &Pose3D,
    cam: &CameraParams,
    spec: &SkeletonSpec,
) -> (Vec<Option<Vector2<f64>>>, Pose2D) {
    let (w, h) = (cam.width, cam.height);
    let prim_idx = spec.primary_indices();
    let sec_idx = spec.secondary_indices();
    let n = spec.num_landmarks();
    let mut proj = vec![None::<Vector2<f64>>; n];
    for (block, indices) in [(&pose.primary, &prim_idx), (&pose.secondary, &sec_idx)] {
        for (bi, &tree_i) in indices.iter().enumerate() {
            if cam.depth(&block[bi]) > 1e-9 {
                proj[tree_i] = project(cam, &block[bi]).ok();
            }
        }
    }
    let in_bounds = |uv: &Vector2<f64>| uv.x >= 0.0 && uv.y >= 0.0 && uv.x < w as f64 && uv.y < h as f64;
    let collect = |indices: &[usize]| -> (Vec<Vector2<f64>>, Vec<bool>) {
        let mut coords = Vec::with_capacity(indices.len());
        let mut vis = Vec::with_capacity(indices.len());
        for &tree_i in indices {
            match proj[tree_i] {
                Some(uv) => {
                    coords.push(uv);
                    vis.push(in_bounds(&uv));
                }
                None => {
                    coords.push(Vector2::zeros());
                    vis.push(false);
                }
            }
        }
        (coords, vis)
    };
    let (pc, pv) = collect(&prim_idx);
    let (sc, sv) = collect(&sec_idx);
    let truth = Pose2D {
        primary: pc,
        secondary: sc,
        primary_visible: pv,
        secondary_visible: sv,
    };
    (proj, truth)
}

/// Noisy observation channel of the exact truth, when configured.
pub fn observe_with_noise(truth: &Pose2D, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> Option<Pose2D> {
    if noise.pixel_noise_px <= 0.0 {
        return None;
    }
    let mut noisy = truth.clone();
    for p in noisy.primary.iter_mut().chain(noisy.secondary.iter_mut()) {
        p.x += noise.pixel_noise_px * gaussian(rng);
        p.y += noise.pixel_noise_px * gaussian(rng);
    }
    Some(noisy)
}

/// Render one pose into one camera. Landmarks behind the camera or outside
/// the sensor get `visible = false` and are not drawn. The 2-D truth is the
/// exact projection (pre pixel-noise) for every landmark in front of the
/// camera.
pub fn render(
    pose: &Pose3D,
    cam: &CameraParams,
    spec: &SkeletonSpec,
    noise: &NoiseConfig,
    jitter: &[[f64; 3]],
    clutter: &[(Vector3<f64>, [f64; 3])],
    rng: &mut ChaCha8Rng,
) -> Result<Rendered> {
    let (w, h) = (cam.width, cam.height);
    let mut canvas = Canvas { w, h, data: vec![0.0; 3 * w * h] };

    // background
    for v in canvas.data.iter_mut() {
        *v = noise.background_level + noise.background_sigma * gaussian(rng);
    }

    let palette = landmark_palette(spec);
    let (proj, truth) = project_truth(pose, cam, spec);

    // bones first so blobs overlay them
    for (i, lm) in spec.landmarks.iter().enumerate().skip(1) {
        if let (Some(a), Some(b)) = (proj[lm.parent.unwrap()], proj[i]) {
            canvas.splat_segment(a, b, noise.bone_strength);
        }
    }

    // 3-D-consistent clutter blobs in the secondary color family
    for (point, color) in clutter {
        if cam.depth(point) <= 1e-9 {
            continue;
        }
        if let Ok(uv) = project(cam, point) {
            canvas.splat_blob(uv, noise.blob_sigma, *color, noise.distractor_strength);
        }
    }

    // landmark blobs
    for (i, lm) in spec.landmarks.iter().enumerate() {
        let Some(uv) = proj[i] else { continue };
        let strength = match lm.kind {
            LandmarkKind::Primary => noise.primary_strength,
            LandmarkKind::Secondary => noise.secondary_strength,
        };
        let mut color = palette[i];
        for c in 0..3 {
            color[c] = (color[c] + jitter[i][c]).clamp(0.0, 1.0);
        }
        canvas.splat_blob(uv, noise.blob_sigma, color, strength);
    }

    for v in canvas.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    let observed = observe_with_noise(&truth, noise, rng);
    let image = Image::new(Tensor::new(vec![3, h, w], canvas.data)?)?;
    Ok(Rendered { image, truth, observed })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CoordUnits;
    use crate::synthdata::{build_rig, default_skeleton};
    use nalgebra::Vector3;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn single_landmark_at_center_is_brightest_there() {
        let spec = default_skeleton();
        let cams = build_rig(2, 3.0, 0.0, 64, 90.0, None).unwrap();
        let cam = &cams[0];
        // park the whole body far behind the camera, then pull one primary
        // landmark onto the optical axis
        let far = Vector3::new(0.0, 0.0, 1e5);
        let mut pose = Pose3D {
            primary: vec![far; spec.num_primary()],
            secondary: vec![far; spec.num_secondary()],
            units: CoordUnits::World,
        };
        pose.primary[0] = Vector3::zeros();
        let noise = NoiseConfig {
            background_sigma: 0.0,
            background_level: 0.0,
            distractors: 0,
            bone_strength: 0.0,
            color_jitter: 0.0,
            ..NoiseConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let jitter = vec![[0.0; 3]; spec.num_landmarks()];
        let out = render(&pose, cam, &spec, &noise, &jitter, &[], &mut rng).unwrap();
        let img = &out.image;
        let (h, w) = (img.height(), img.width());
        let lum = |y: usize, x: usize| -> f64 {
            (0..3).map(|c| img.data.values()[c * h * w + y * w + x]).sum()
        };
        let center = out.truth.primary[0];
        let cx = center.x.round() as usize;
        let cy = center.y.round() as usize;
        let center_lum = lum(cy, cx);
        for y in 0..h {
            for x in 0..w {
                assert!(lum(y, x) <= center_lum + 1e-12);
            }
        }
    }

    #[test]
    fn blob_size_is_depth_independent() {
        // orthographic-scale blobs: translating the subject along the camera
        // axis must not change the blob footprint
        let spec = default_skeleton();
        let cams = build_rig(2, 4.0, 0.0, 64, 110.0, None).unwrap();
        let cam = &cams[0];
        let axis = (Vector3::zeros() - cam.center()).normalize();
        let noise = NoiseConfig {
            background_sigma: 0.0,
            background_level: 0.0,
            distractors: 0,
            bone_strength: 0.0,
            ..NoiseConfig::default()
        };
        let jitter = vec![[0.0; 3]; spec.num_landmarks()];
        let far = Vector3::new(0.0, 0.0, 1e5);
        let footprint = |offset: f64| -> usize {
            let mut pose = Pose3D {
                primary: vec![far; spec.num_primary()],
                secondary: vec![far; spec.num_secondary()],
                units: CoordUnits::World,
            };
            pose.primary[0] = axis * offset;
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let out = render(&pose, cam, &spec, &noise, &jitter, &[], &mut rng).unwrap();
            out.image.data.values().iter().filter(|&&v| v > 0.05).count()
        };
        let near = footprint(-1.0);
        let far_fp = footprint(1.0);
        assert_eq!(near, far_fp);
    }

    #[test]
    fn behind_camera_landmarks_are_invisible() {
        let spec = default_skeleton();
        let cams = build_rig(2, 3.0, 0.0, 64, 90.0, None).unwrap();
        let cam = &cams[0];
        let behind = cam.center() * 2.0; // opposite side of the origin
        let pose = Pose3D {
            primary: vec![behind; spec.num_primary()],
            secondary: vec![behind; spec.num_secondary()],
            units: CoordUnits::World,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let jitter = vec![[0.0; 3]; spec.num_landmarks()];
        let out = render(&pose, cam, &spec, &NoiseConfig::default(), &jitter, &[], &mut rng).unwrap();
        assert!(out.truth.primary_visible.iter().all(|v| !v));
        assert!(out.truth.secondary_visible.iter().all(|v| !v));
    }
}
