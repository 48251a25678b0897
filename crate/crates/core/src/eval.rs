//! Evaluation: the PCKh metric, feature-correlation statistics, and the
//! results-table CSV bundle.

use std::path::Path;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::error::{CoreError, Result};
use crate::geometry::{normalize_pose, project, triangulate_dlt, CoordUnits, Pose2D, Pose3D, CONDITION_LIMIT};
use crate::predictor::{denormalize_prediction, Predictor};
use crate::synthdata::{Dataset, Split};
use crate::util::{format_float, write_csv};

/// Per-landmark correctness rates at each threshold. A landmark counts as
/// correct when its distance to truth is within `t * L` pixels (inclusive),
/// with `L` the per-frame reference length from the designated pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PckhResult {
    pub thresholds: Vec<f64>,
    /// Secondary block first, then primary (detector channel order).
    pub landmark_names: Vec<String>,
    pub num_secondary: usize,
    /// `rates[t][k]` for threshold index `t` and landmark `k`.
    pub rates: Vec<Vec<f64>>,
    /// Valid (visible-truth) samples per landmark.
    pub counts: Vec<usize>,
    /// Frames dropped because the reference length was zero or invisible.
    pub skipped_frames: usize,
}

impl PckhResult {
    pub fn mean_secondary(&self, t_index: usize) -> f64 {
        let s = self.num_secondary;
        self.rates[t_index][..s].iter().sum::<f64>() / s as f64
    }

    pub fn mean_primary(&self, t_index: usize) -> f64 {
        let s = self.num_secondary;
        let p = self.landmark_names.len() - s;
        self.rates[t_index][s..].iter().sum::<f64>() / p as f64
    }
}

/// PCKh over aligned prediction/truth lists. `ref_pair` indexes the primary
/// block of the truth poses.
pub fn pckh(
    preds: &[Pose2D],
    truths: &[Pose2D],
    thresholds: &[f64],
    ref_pair: [usize; 2],
    landmark_names: Vec<String>,
    num_secondary: usize,
) -> Result<PckhResult> {
    if preds.len() != truths.len() {
        return Err(CoreError::LandmarkCountMismatch { expected: truths.len(), got: preds.len() });
    }
    if preds.is_empty() {
        return Err(CoreError::EmptyInput { context: "pckh".into() });
    }
    let n_landmarks = landmark_names.len();
    let mut correct = vec![vec![0usize; n_landmarks]; thresholds.len()];
    let mut counts = vec![0usize; n_landmarks];
    let mut skipped = 0usize;

    for (pred, truth) in preds.iter().zip(truths) {
        let (a, b) = (ref_pair[0], ref_pair[1]);
        if !(truth.primary_visible[a] && truth.primary_visible[b]) {
            skipped += 1;
            continue;
        }
        let ref_len = (truth.primary[a] - truth.primary[b]).norm();
        if ref_len <= 0.0 {
            skipped += 1;
            continue;
        }
        // secondary block first, mirroring the detector channel order
        let pairs = truth
            .secondary
            .iter()
            .zip(&truth.secondary_visible)
            .zip(pred.secondary.iter())
            .chain(truth.primary.iter().zip(&truth.primary_visible).zip(pred.primary.iter()));
        for (k, ((t_coord, &visible), p_coord)) in pairs.enumerate() {
            if !visible {
                continue;
            }
            counts[k] += 1;
            let dist = (t_coord - p_coord).norm();
            for (ti, &t) in thresholds.iter().enumerate() {
                if dist <= t * ref_len {
                    correct[ti][k] += 1;
                }
            }
        }
    }
    let rates = correct
        .iter()
        .map(|row| {
            row.iter()
                .zip(&counts)
                .map(|(&c, &n)| if n > 0 { c as f64 / n as f64 } else { f64::NAN })
                .collect()
        })
        .collect();
    Ok(PckhResult {
        thresholds: thresholds.to_vec(),
        landmark_names,
        num_secondary,
        rates,
        counts,
        skipped_frames: skipped,
    })
}

/// Run the detector over a split and score it against the stored truth.
pub fn evaluate_detector(
    dataset: &Dataset,
    detector: &Detector,
    split: Split,
    thresholds: &[f64],
) -> Result<PckhResult> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for frame in dataset.frames_in_split(split) {
        for view in &frame.views {
            let Some(truth) = view.pose2d() else { continue };
            if view.image_path.is_none() {
                continue;
            }
            let image = dataset.load_image(view)?;
            let (_, _, pred) = detector.detect(&image)?;
            preds.push(pred);
            truths.push(truth);
        }
    }
    let mut names = dataset.skeleton.secondary_names();
    names.extend(dataset.skeleton.primary_names());
    pckh(
        &preds,
        &truths,
        thresholds,
        dataset.skeleton.ref_pair,
        names,
        dataset.skeleton.num_secondary(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationStats {
    /// Same-landmark feature correlations across views.
    pub self_values: Vec<f64>,
    /// Different-landmark feature correlations within a view.
    pub cross_values: Vec<f64>,
    pub mean_self: f64,
    pub mean_cross: f64,
}

impl CorrelationStats {
    pub fn gap(&self) -> f64 {
        self.mean_self - self.mean_cross
    }
}

/// Feature-correlation statistics at the projected *predicted* secondary
/// locations over a sample of multiview frames.
pub fn correlation_stats(
    dataset: &Dataset,
    detector: &Detector,
    predictor: &Predictor,
    sample_frames: usize,
    seed: u64,
) -> Result<CorrelationStats> {
    let pool: Vec<_> = dataset
        .multiview_pool()
        .into_iter()
        .filter(|f| f.views.iter().filter(|v| v.image_path.is_some()).count() >= 2)
        .collect();
    if pool.is_empty() {
        return Err(CoreError::EmptyInput { context: "correlation_stats: no multiview frames".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ee);
    let mut self_values = Vec::new();
    let mut cross_values = Vec::new();
    let frame_triple = dataset.skeleton.frame_triple;
    let s = dataset.skeleton.num_secondary();

    for _ in 0..sample_frames {
        let frame = pool[rng.random_range(0..pool.len())];
        let vi = rng.random_range(0..frame.views.len());
        let mut vj = rng.random_range(0..frame.views.len() - 1);
        if vj >= vi {
            vj += 1;
        }
        let (view_i, view_j) = (&frame.views[vi], &frame.views[vj]);
        let cam_i = &dataset.cameras[view_i.camera];
        let cam_j = &dataset.cameras[view_j.camera];
        let img_i = dataset.load_image(view_i)?;
        let img_j = dataset.load_image(view_j)?;
        let (_, feat_i, pose_i) = detector.detect(&img_i)?;
        let (_, feat_j, pose_j) = detector.detect(&img_j)?;

        // predicted world secondaries from detected primaries
        let mut primary_world = Vec::with_capacity(pose_i.primary.len());
        let mut degenerate = false;
        for (zi, zj) in pose_i.primary.iter().zip(&pose_j.primary) {
            match triangulate_dlt(zi, zj, cam_i, cam_j) {
                Ok(t) if !t.low_confidence && t.condition <= CONDITION_LIMIT => {
                    primary_world.push(t.point)
                }
                _ => {
                    degenerate = true;
                    break;
                }
            }
        }
        if degenerate {
            continue;
        }
        let tri_pose = Pose3D { primary: primary_world, secondary: vec![], units: CoordUnits::World };
        let Ok((canon, transform)) = normalize_pose(&tri_pose, frame_triple) else { continue };
        let Ok(pred_canon) = predictor.predict_secondary(&canon.primary) else { continue };
        let world = denormalize_prediction(&pred_canon, &transform);

        let sample = |feat: &crate::detector::FeatureMap, px: &Vector2<f64>| -> Vec<f64> {
            let mut tape = crate::tensor::Tape::new();
            let f = tape.leaf(feat.data.clone());
            let xy = tape.leaf(crate::tensor::Tensor::from_vec(vec![px.x, px.y]));
            let (out, _) = crate::detector::sample_feature(&mut tape, f, xy, &detector.config)
                .expect("shapes fixed");
            tape.values(out).to_vec()
        };
        let ncc = |a: &[f64], b: &[f64]| -> f64 {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb + crate::losses::NCC_EPSILON)
        };

        let mut feats_i = Vec::with_capacity(s);
        let mut feats_j = Vec::with_capacity(s);
        let mut skip = false;
        for x in &world {
            if cam_i.depth(x) <= 1e-9 || cam_j.depth(x) <= 1e-9 {
                skip = true;
                break;
            }
            feats_i.push(sample(&feat_i, &project(cam_i, x)?));
            feats_j.push(sample(&feat_j, &project(cam_j, x)?));
        }
        if skip {
            continue;
        }
        for k in 0..s {
            self_values.push(ncc(&feats_i[k], &feats_j[k]));
        }
        for feats in [&feats_i, &feats_j] {
            for k in 0..s {
                for l in (k + 1)..s {
                    cross_values.push(ncc(&feats[k], &feats[l]));
                }
            }
        }
    }
    if self_values.is_empty() {
        return Err(CoreError::EmptyInput { context: "correlation_stats: no valid pairs".into() });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(CorrelationStats {
        mean_self: mean(&self_values),
        mean_cross: mean(&cross_values),
        self_values,
        cross_values,
    })
}

/// One row of the mode/ratio ablation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: String,
    pub ratio: f64,
    pub landmark: String,
    pub threshold: f64,
    pub rate: f64,
    /// Failure message when the run could not complete (rate is NaN then).
    pub error: Option<String>,
}

/// One row of the baseline comparison table (PCKh@0.5).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub method: String,
    pub mode: String,
    /// "gt" or "detected" primary inputs at query time.
    pub input: String,
    pub landmark: String,
    pub rate: f64,
}

/// One sample of a PCKh-vs-threshold curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub threshold: f64,
    pub mean_secondary: f64,
}

/// The default threshold grid for PCKh curves (includes 0.25/0.5/0.75).
pub fn curve_threshold_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

/// Write the table bundle. Empty inputs produce header-only tables and a
/// warning, not an error; missing combinations simply have no rows.
pub fn report_tables(
    ablation: &[AblationRow],
    baselines: &[BaselineRow],
    curves: &[CurvePoint],
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    // mode x landmark x threshold
    let table1: Vec<Vec<String>> = ablation
        .iter()
        .filter(|r| (r.ratio - ablation_reference_ratio(ablation)).abs() < 1e-12)
        .map(|r| {
            vec![
                r.mode.clone(),
                format_float(r.threshold),
                r.landmark.clone(),
                format_float(r.rate),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let p1 = out_dir.join("table1_modes.csv");
    write_csv(&p1, &["mode", "threshold", "landmark", "pckh", "error"], &table1)?;
    written.push(p1);

    let table2: Vec<Vec<String>> = baselines
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.mode.clone(),
                r.input.clone(),
                r.landmark.clone(),
                format_float(r.rate),
            ]
        })
        .collect();
    let p2 = out_dir.join("table2_baselines.csv");
    write_csv(&p2, &["method", "mode", "input", "landmark", "pckh05"], &table2)?;
    written.push(p2);

    // ratio x mode at t = 0.5 (mean secondary)
    let mut table3: Vec<Vec<String>> = Vec::new();
    let mut combos: Vec<(String, f64)> = Vec::new();
    for r in ablation {
        let key = (r.mode.clone(), r.ratio);
        if !combos.contains(&key) {
            combos.push(key);
        }
    }
    for (mode, ratio) in combos {
        let rows: Vec<&AblationRow> = ablation
            .iter()
            .filter(|r| r.mode == mode && r.ratio == ratio && (r.threshold - 0.5).abs() < 1e-12)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|r| r.rate).sum::<f64>() / rows.len() as f64;
        let error = rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        table3.push(vec![
            format_float(ratio),
            mode,
            format_float(mean),
            error,
        ]);
    }
    let p3 = out_dir.join("table3_ratios.csv");
    write_csv(&p3, &["ratio", "mode", "mean_secondary_pckh05", "error"], &table3)?;
    written.push(p3);

    let curve_rows: Vec<Vec<String>> = curves
        .iter()
        .map(|c| vec![c.method.clone(), format_float(c.threshold), format_float(c.mean_secondary)])
        .collect();
    let p4 = out_dir.join("pckh_curve.csv");
    write_csv(&p4, &["method", "threshold", "mean_secondary_pckh"], &curve_rows)?;
    written.push(p4);

    if ablation.is_empty() && baselines.is_empty() && curves.is_empty() {
        eprintln!("warning: report_tables received no rows; wrote header-only tables");
    }
    Ok(written)
}

fn ablation_reference_ratio(rows: &[AblationRow]) -> f64 {
    rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max)
}
