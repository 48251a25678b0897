//! Differentiable landmark detector: a small convolutional feature
//! extractor with per-landmark heatmap heads and soft-argmax decoding.
//!
//! Channel layout follows the labeled-loss convention: the first `S`
//! heatmap channels are the secondary landmarks, the next `P` the primary
//! landmarks, and the last channel is background (present but unused by
//! the losses). The penultimate activations form the feature map that the
//! contrastive terms sample.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::Pose2D;
use crate::optim::ParamSet;
use crate::tensor::{Tape, Tensor, Var};

/// RGB image, `[3, H, W]`, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Image {
    pub data: Tensor,
}

impl Image {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.shape().len() != 3 || data.shape()[0] != 3 {
            return Err(CoreError::ShapeMismatch {
                op: "image".into(),
                lhs: data.shape().to_vec(),
                rhs: vec![3, 0, 0],
            });
        }
        if !data.is_finite() {
            return Err(CoreError::NonFinite { context: "image values".into() });
        }
        Ok(Self { data })
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Per-landmark heatmaps, `[(S+P+1), h, w]`, each channel softmax-normalized.
#[derive(Debug, Clone)]
pub struct HeatmapStack {
    pub data: Tensor,
}

/// Penultimate activations, `[n, h, w]`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub data: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Input image size (H, W).
    pub image_size: (usize, usize),
    /// Heatmap grid size (h, w); must equal the image size divided by the
    /// product of the stage strides.
    pub heatmap_size: (usize, usize),
    /// Feature dimension n of the penultimate layer.
    pub feature_dim: usize,
    /// Soft-argmax temperature.
    pub temperature: f64,
    pub stage_channels: [usize; 3],
    pub stage_strides: [usize; 3],
    pub num_primary: usize,
    pub num_secondary: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            image_size: (64, 64),
            heatmap_size: (16, 16),
            feature_dim: 32,
            temperature: 1.0,
            stage_channels: [16, 24, 32],
            stage_strides: [2, 2, 1],
            num_primary: 13,
            num_secondary: 6,
        }
    }
}

impl DetectorConfig {
    pub fn num_channels(&self) -> usize {
        self.num_primary + self.num_secondary + 1
    }

    pub fn validate(&self) -> Result<()> {
        let stride: usize = self.stage_strides.iter().product();
        let (h, w) = self.image_size;
        if (h / stride, w / stride) != self.heatmap_size {
            return Err(CoreError::InvalidConfig {
                reason: format!(
                    "heatmap size {:?} does not match image {:?} / stride {}",
                    self.heatmap_size, self.image_size, stride
                ),
            });
        }
        Ok(())
    }

    /// Pixel stride of one heatmap cell, (sy, sx).
    pub fn cell_stride(&self) -> (f64, f64) {
        (
            self.image_size.0 as f64 / self.heatmap_size.0 as f64,
            self.image_size.1 as f64 / self.heatmap_size.1 as f64,
        )
    }
}

/// Detector outputs on the tape.
pub struct DetectorOut {
    /// Normalized heatmaps, `[(S+P+1), h, w]`.
    pub heatmaps: Var,
    /// Feature map, `[n, h, w]`.
    pub features: Var,
    /// Per-landmark pixel coordinates, `[2]` each, secondary block first.
    pub coords: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    pub params: ParamSet,
}

impl Detector {
    /// He-style random initialization; the head gets a small scale so an
    /// untrained detector produces near-uniform heatmaps.
    pub fn init(config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut in_ch = 3;
        for (i, (&out_ch, _)) in config.stage_channels.iter().zip(&config.stage_strides).enumerate() {
            let fan_in = in_ch * 9;
            let std = (2.0 / fan_in as f64).sqrt();
            params.insert(&format!("detector/stage{i}/weight"), gaussian(&mut rng, &[out_ch, in_ch, 3, 3], std));
            params.insert(&format!("detector/stage{i}/bias"), Tensor::zeros(&[out_ch]));
            in_ch = out_ch;
        }
        let std_feat = (2.0 / in_ch as f64).sqrt();
        params.insert("detector/feat/weight", gaussian(&mut rng, &[config.feature_dim, in_ch, 1, 1], std_feat));
        params.insert("detector/feat/bias", Tensor::zeros(&[config.feature_dim]));
        let k = config.num_channels();
        params.insert("detector/head/weight", gaussian(&mut rng, &[k, config.feature_dim, 1, 1], 0.01));
        params.insert("detector/head/bias", Tensor::zeros(&[k]));
        Ok(Self { config, params })
    }

    /// Zero the head projection; heatmaps become exactly uniform.
    pub fn zero_head(&mut self) {
        let k = self.config.num_channels();
        self.params.set(
            "detector/head/weight",
            Tensor::zeros(&[k, self.config.feature_dim, 1, 1]),
        );
        self.params.set("detector/head/bias", Tensor::zeros(&[k]));
    }

    /// Forward pass on a tape with pre-registered parameter handles.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        image: Var,
    ) -> Result<DetectorOut> {
        let shape = tape.shape(image).to_vec();
        let (ih, iw) = (self.config.image_size.0, self.config.image_size.1);
        if shape != [3, ih, iw] {
            return Err(CoreError::ShapeMismatch {
                op: "detector_forward".into(),
                lhs: shape,
                rhs: vec![3, ih, iw],
            });
        }

        let mut h = image;
        for (i, &stride) in self.config.stage_strides.iter().enumerate() {
            let w = vars[&format!("detector/stage{i}/weight")];
            let b = vars[&format!("detector/stage{i}/bias")];
            let conv = tape.conv2d(h, w, b, stride, 1)?;
            h = tape.relu(conv);
        }
        let feat_pre = tape.conv2d(h, vars["detector/feat/weight"], vars["detector/feat/bias"], 1, 0)?;
        let features = tape.relu(feat_pre);
        let logits = tape.conv2d(features, vars["detector/head/weight"], vars["detector/head/bias"], 1, 0)?;

        let (hh, hw) = self.config.heatmap_size;
        let (sy, sx) = self.config.cell_stride();
        let grid = grid_leaves(tape, hh, hw);
        let k = self.config.num_channels();
        let mut coords = Vec::with_capacity(k - 1);
        let mut channels = Vec::with_capacity(k);
        for c in 0..k {
            let ch = tape.slice(logits, c * hh * hw, &[hh, hw])?;
            let scaled = tape.scalar_mul(ch, 1.0 / self.config.temperature);
            let p = tape.softmax(scaled);
            channels.push(p);
            if c + 1 == k {
                continue; // background carries no coordinate
            }
            let gx = tape.dot(p, grid.0)?;
            let gy = tape.dot(p, grid.1)?;
            let px_s = tape.scalar_mul(gx, sx);
            let px = tape.add_const(px_s, 0.5 * sx - 0.5);
            let py_s = tape.scalar_mul(gy, sy);
            let py = tape.add_const(py_s, 0.5 * sy - 0.5);
            coords.push(tape.concat(&[px, py])?);
        }
        let stacked = tape.concat(&channels)?;
        let heatmaps = tape.reshape(stacked, &[k, hh, hw])?;
        Ok(DetectorOut { heatmaps, features, coords })
    }

    /// Plain forward pass for inference: fresh tape, values extracted.
    pub fn detect(&self, image: &Image) -> Result<(HeatmapStack, FeatureMap, Pose2D)> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let img = tape.leaf(image.data.clone());
        let out = self.forward(&mut tape, &vars, img)?;
        let heatmaps = HeatmapStack { data: tape.value(out.heatmaps).clone() };
        let features = FeatureMap { data: tape.value(out.features).clone() };
        let s = self.config.num_secondary;
        let coord = |v: Var| {
            let vals = tape.values(v);
            Vector2::new(vals[0], vals[1])
        };
        let secondary: Vec<Vector2<f64>> = out.coords[..s].iter().map(|&v| coord(v)).collect();
        let primary: Vec<Vector2<f64>> = out.coords[s..].iter().map(|&v| coord(v)).collect();
        Ok((heatmaps, features, Pose2D::all_visible(primary, secondary)))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    // Box-Muller keeps the initialization independent of distribution crates
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    Tensor::new(shape.to_vec(), values).expect("shape/len agree")
}

/// Constant x/y coordinate grids as `[h, w]` leaves.
fn grid_leaves(tape: &mut Tape, h: usize, w: usize) -> (Var, Var) {
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            gx.push(x as f64);
            gy.push(y as f64);
        }
    }
    (
        tape.leaf(Tensor::new(vec![h, w], gx).expect("grid")),
        tape.leaf(Tensor::new(vec![h, w], gy).expect("grid")),
    )
}

/// Soft-argmax of one heatmap channel `[h, w]` at the given temperature.
/// Returns expected `(x, y)` in heatmap-grid coordinates.
pub fn soft_argmax(tape: &mut Tape, channel: Var, temperature: f64) -> Result<Var> {
    let shape = tape.shape(channel).to_vec();
    if shape.len() != 2 {
        return Err(CoreError::ShapeMismatch { op: "soft_argmax".into(), lhs: shape, rhs: vec![0, 0] });
    }
    let (h, w) = (shape[0], shape[1]);
    let grid = grid_leaves(tape, h, w);
    let scaled = tape.scalar_mul(channel, 1.0 / temperature);
    let p = tape.softmax(scaled);
    let x = tape.dot(p, grid.0)?;
    let y = tape.dot(p, grid.1)?;
    tape.concat(&[x, y])
}

/// Bilinear feature lookup at a pixel-space location. The pixel position is
/// mapped onto the heatmap grid that `features` lives on. Returns the `[n]`
/// feature node and an out-of-bounds flag.
pub fn sample_feature(
    tape: &mut Tape,
    features: Var,
    xy_pixels: Var,
    config: &DetectorConfig,
) -> Result<(Var, bool)> {
    let (sy, sx) = config.cell_stride();
    let px = tape.slice(xy_pixels, 0, &[1])?;
    let py = tape.slice(xy_pixels, 1, &[1])?;
    let gx_s = tape.scalar_mul(px, 1.0 / sx);
    let gx = tape.add_const(gx_s, 0.5 / sx - 0.5);
    let gy_s = tape.scalar_mul(py, 1.0 / sy);
    let gy = tape.add_const(gy_s, 0.5 / sy - 0.5);
    let grid_xy = tape.concat(&[gx, gy])?;
    tape.bilinear_sample(features, grid_xy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DetectorConfig {
        DetectorConfig {
            image_size: (16, 16),
            heatmap_size: (4, 4),
            feature_dim: 6,
            temperature: 1.0,
            stage_channels: [4, 6, 8],
            stage_strides: [2, 2, 1],
            num_primary: 3,
            num_secondary: 2,
        }
    }

    fn random_image(config: &DetectorConfig, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = config.image_size;
        let values: Vec<f64> = (0..3 * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        Image::new(Tensor::new(vec![3, h, w], values).unwrap()).unwrap()
    }

    #[test]
    fn soft_argmax_delta_limit() {
        let mut tape = Tape::new();
        let mut vals = vec![0.0; 8 * 8];
        vals[3 * 8 + 5] = 1000.0;
        let ch = tape.leaf(Tensor::new(vec![8, 8], vals).unwrap());
        let xy = soft_argmax(&mut tape, ch, 1.0).unwrap();
        let out = tape.values(xy);
        assert!((out[0] - 5.0).abs() < 1e-6 && (out[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn soft_argmax_uniform_centroid() {
        let mut tape = Tape::new();
        let ch = tape.leaf(Tensor::new(vec![5, 9], vec![0.7; 45]).unwrap());
        let xy = soft_argmax(&mut tape, ch, 2.0).unwrap();
        let out = tape.values(xy);
        assert!((out[0] - 4.0).abs() < 1e-12 && (out[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn soft_argmax_two_equal_peaks_midpoint() {
        let mut tape = Tape::new();
        let mut vals = vec![0.0; 8 * 8];
        vals[2 * 8 + 2] = 50.0;
        vals[2 * 8 + 6] = 50.0;
        let ch = tape.leaf(Tensor::new(vec![8, 8], vals).unwrap());
        let xy = soft_argmax(&mut tape, ch, 1.0).unwrap();
        let out = tape.values(xy);
        assert!((out[0] - 4.0).abs() < 1e-9 && (out[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_head_gives_uniform_heatmaps_and_centered_coords() {
        let config = tiny_config();
        let mut det = Detector::init(config.clone(), 3).unwrap();
        det.zero_head();
        let img = random_image(&config, 7);
        let (heatmaps, _, pose) = det.detect(&img).unwrap();
        let (hh, hw) = config.heatmap_size;
        let uniform = 1.0 / (hh * hw) as f64;
        for v in heatmaps.data.values() {
            assert!((v - uniform).abs() < 1e-12);
        }
        let center = Vector2::new(
            (config.image_size.1 as f64 - 1.0) / 2.0,
            (config.image_size.0 as f64 - 1.0) / 2.0,
        );
        let (_, sx) = config.cell_stride();
        for c in pose.primary.iter().chain(&pose.secondary) {
            assert!((c - center).norm() <= sx, "coord {c:?} vs center {center:?}");
        }
    }

    #[test]
    fn detect_is_deterministic() {
        let config = tiny_config();
        let det = Detector::init(config.clone(), 11).unwrap();
        let img = random_image(&config, 13);
        let (h1, f1, p1) = det.detect(&img).unwrap();
        let (h2, f2, p2) = det.detect(&img).unwrap();
        assert_eq!(h1.data.values(), h2.data.values());
        assert_eq!(f1.data.values(), f2.data.values());
        assert_eq!(p1.primary, p2.primary);
    }

    #[test]
    fn heatmap_channels_are_normalized_and_counted() {
        let config = tiny_config();
        let det = Detector::init(config.clone(), 5).unwrap();
        let img = random_image(&config, 17);
        let (heatmaps, _, _) = det.detect(&img).unwrap();
        let k = config.num_channels();
        assert_eq!(heatmaps.data.shape()[0], k);
        let (hh, hw) = config.heatmap_size;
        for c in 0..k {
            let sum: f64 = heatmaps.data.values()[c * hh * hw..(c + 1) * hh * hw].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let config = tiny_config();
        let det = Detector::init(config, 5).unwrap();
        let bad = Image::new(Tensor::zeros(&[3, 8, 8])).unwrap();
        assert!(det.detect(&bad).is_err());
    }

    #[test]
    fn every_parameter_block_receives_gradient() {
        let config = tiny_config();
        let det = Detector::init(config.clone(), 23).unwrap();
        let img = random_image(&config, 29);
        let mut tape = Tape::new();
        let vars = det.params.register(&mut tape);
        let iv = tape.leaf(img.data.clone());
        let out = det.forward(&mut tape, &vars, iv).unwrap();
        // pull on both coordinates and features so all outputs participate
        let mut loss_terms = Vec::new();
        for (i, &c) in out.coords.iter().enumerate() {
            let target = tape.leaf(Tensor::from_vec(vec![i as f64, 2.0 * i as f64]));
            let d = tape.sub(c, target).unwrap();
            let sq = tape.square(d);
            loss_terms.push(tape.sum(sq));
        }
        let fsum = tape.sum(out.features);
        let fsq = tape.square(fsum);
        loss_terms.push(fsq);
        let all = tape.concat(&loss_terms).unwrap();
        let loss = tape.sum(all);
        let grads = tape.backward(loss).unwrap();
        for (path, &var) in &vars {
            let (g, detached) = grads.get_or_zero(&tape, var);
            assert!(!detached, "{path} detached");
            let norm: f64 = g.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm > 0.0, "{path} has zero gradient");
        }
    }

    #[test]
    fn sample_feature_gradient_matches_finite_differences() {
        let config = tiny_config();
        let (hh, hw) = config.heatmap_size;
        let n = config.feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let fvals: Vec<f64> = (0..n * hh * hw).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fmap = Tensor::new(vec![n, hh, hw], fvals).unwrap();
        // pixel location mapping to a non-integer interior grid position
        let xy = Tensor::from_vec(vec![6.3, 7.1]);
        crate::tensor::tests::finite_difference_check(
            &[fmap, xy],
            |tape, vars| {
                let (feat, oob) = sample_feature(tape, vars[0], vars[1], &config).unwrap();
                assert!(!oob);
                let sq = tape.square(feat);
                tape.sum(sq)
            },
            1e-4,
        );
    }

    #[test]
    fn sample_feature_at_cell_center_returns_node_value() {
        let config = tiny_config();
        let (hh, hw) = config.heatmap_size;
        let n = config.feature_dim;
        let vals: Vec<f64> = (0..n * hh * hw).map(|i| i as f64).collect();
        let mut tape = Tape::new();
        let fmap = tape.leaf(Tensor::new(vec![n, hh, hw], vals.clone()).unwrap());
        // grid node (2, 1) in pixels: px = (2 + 0.5) * 4 - 0.5
        let (sy, sx) = config.cell_stride();
        let xy = tape.leaf(Tensor::from_vec(vec![2.5 * sx - 0.5, 1.5 * sy - 0.5]));
        let (feat, oob) = sample_feature(&mut tape, fmap, xy, &config).unwrap();
        assert!(!oob);
        for c in 0..n {
            assert!((tape.values(feat)[c] - vals[c * hh * hw + hw + 2]).abs() < 1e-9);
        }
    }
}
