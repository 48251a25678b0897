//! Comparison baselines: ALS / biased-ALS matrix completion and a pose
//! VAE, each runnable on the canonical 3-D representation or the per-view
//! normalized 2-D representation, evaluated through the same PCKh harness
//! as the detector.

mod als;
mod vae;

pub use als::{als_complete, batch_query_matrix, nearest_neighbor_query, AlsConfig, AlsOutcome, CompletionMatrix};
pub use vae::{kl_to_unit_gaussian, Vae, VaeConfig};

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::detector::Detector;
use crate::error::{CoreError, Result};
use crate::eval::{pckh, BaselineRow};
use crate::geometry::{
    normalize_pose, project, triangulate_dlt, CoordUnits, Pose2D, Pose3D, SimilarityTransform,
    CONDITION_LIMIT,
};
use crate::subspace::{normalize_pose_2d, stack_blocks_2d, stack_blocks_3d, Similarity2D};
use crate::synthdata::{Dataset, FrameData, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Als,
    Bals,
    Vae,
}

impl BaselineMethod {
    pub fn label(self) -> &'static str {
        match self {
            BaselineMethod::Als => "als",
            BaselineMethod::Bals => "bals",
            BaselineMethod::Vae => "vae",
        }
    }

    pub fn all() -> [BaselineMethod; 3] {
        [BaselineMethod::Als, BaselineMethod::Bals, BaselineMethod::Vae]
    }
}

/// A prepared query: observed primary columns, the transform back to
/// pixels, and the truth to score against.
struct Query3D {
    primary: Vec<f64>,
    transform: SimilarityTransform,
    frame_idx: usize,
}

struct Query2D {
    primary: Vec<f64>,
    transform: Similarity2D,
    truth: Pose2D,
}

/// PCKh\@0.5 rows for every (method, representation, input) combination on
/// the test split. `detector` adds the detected-primary query variant.
pub fn table2_rows(
    dataset: &Dataset,
    detector: Option<&Detector>,
    als_config: &AlsConfig,
) -> Result<Vec<BaselineRow>> {
    let skeleton = &dataset.skeleton;
    let (p, s) = (skeleton.num_primary(), skeleton.num_secondary());
    let frame_triple = skeleton.frame_triple;
    let sec_names = skeleton.secondary_names();
    let mut rows = Vec::new();

    // ---- canonical 3-D representation ----
    let labeled3: Vec<DVector<f64>> = dataset
        .frames_in_split(Split::LabeledFull)
        .filter_map(|f| {
            let pose = f.pose3d()?;
            let (canon, _) = normalize_pose(&pose, frame_triple).ok()?;
            Some(stack_blocks_3d(&canon.primary, &canon.secondary))
        })
        .collect();
    if labeled3.is_empty() {
        return Err(CoreError::EmptyInput { context: "table2: no labeled 3-D poses".into() });
    }
    let labeled3_mat = DMatrix::from_fn(labeled3.len(), 3 * (p + s), |r, c| labeled3[r][c]);

    let test_frames: Vec<(usize, &FrameData)> = dataset
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.split == Split::Test)
        .collect();

    let gt_queries3: Vec<Query3D> = test_frames
        .iter()
        .filter_map(|&(idx, f)| {
            let pose = f.pose3d()?;
            let (canon, transform) = normalize_pose(&pose, frame_triple).ok()?;
            Some(Query3D {
                primary: canon.primary.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
                transform,
                frame_idx: idx,
            })
        })
        .collect();

    let detected_queries3: Option<Vec<Query3D>> = match detector {
        None => None,
        Some(det) => {
            let mut out = Vec::new();
            for &(idx, frame) in &test_frames {
                let views: Vec<usize> = frame
                    .views
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.image_path.is_some())
                    .map(|(i, _)| i)
                    .collect();
                if views.len() < 2 {
                    continue;
                }
                let (va, vb) = (&frame.views[views[0]], &frame.views[views[1]]);
                let cam_a = &dataset.cameras[va.camera];
                let cam_b = &dataset.cameras[vb.camera];
                let (_, _, pose_a) = det.detect(&dataset.load_image(va)?)?;
                let (_, _, pose_b) = det.detect(&dataset.load_image(vb)?)?;
                let mut primary = Vec::with_capacity(p);
                let mut ok = true;
                for (za, zb) in pose_a.primary.iter().zip(&pose_b.primary) {
                    match triangulate_dlt(za, zb, cam_a, cam_b) {
                        Ok(t) if !t.low_confidence && t.condition <= CONDITION_LIMIT => {
                            primary.push(t.point)
                        }
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let tri = Pose3D { primary, secondary: vec![], units: CoordUnits::World };
                let Ok((canon, transform)) = normalize_pose(&tri, frame_triple) else { continue };
                out.push(Query3D {
                    primary: canon.primary.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
                    transform,
                    frame_idx: idx,
                });
            }
            Some(out)
        }
    };

    let mut score3 = |method: BaselineMethod, input: &str, queries: &[Query3D]| -> Result<()> {
        if queries.is_empty() {
            return Ok(());
        }
        let predictions =
            impute_secondary(&labeled3_mat, queries.iter().map(|q| q.primary.clone()).collect(), 3 * p, method, als_config)?;
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (q, sec) in queries.iter().zip(&predictions) {
            let world: Vec<Vector3<f64>> = (0..s)
                .map(|k| {
                    q.transform
                        .inverse()
                        .apply(&Vector3::new(sec[3 * k], sec[3 * k + 1], sec[3 * k + 2]))
                })
                .collect();
            let frame = &dataset.frames[q.frame_idx];
            for view in &frame.views {
                let Some(truth) = view.pose2d() else { continue };
                let cam = &dataset.cameras[view.camera];
                let mut coords = Vec::with_capacity(s);
                let mut visible = true;
                for w in &world {
                    if cam.depth(w) <= 1e-9 {
                        visible = false;
                        break;
                    }
                    coords.push(project(cam, w)?);
                }
                if !visible {
                    continue;
                }
                preds.push(Pose2D {
                    primary: truth.primary.clone(),
                    secondary: coords,
                    primary_visible: truth.primary_visible.clone(),
                    secondary_visible: vec![true; s],
                });
                truths.push(truth);
            }
        }
        push_rows(&mut rows, method, "3d", input, &preds, &truths, skeleton.ref_pair, &sec_names, s)
    };
    for method in BaselineMethod::all() {
        score3(method, "gt", &gt_queries3)?;
        if let Some(q) = &detected_queries3 {
            score3(method, "detected", q)?;
        }
    }

    // ---- per-view normalized 2-D representation ----
    let labeled2: Vec<DVector<f64>> = dataset
        .frames_in_split(Split::LabeledFull)
        .flat_map(|f| f.views.iter())
        .filter_map(|view| {
            let pose = view.pose2d()?;
            if !pose.primary_visible.iter().chain(&pose.secondary_visible).all(|&v| v) {
                return None;
            }
            let (norm, _) = normalize_pose_2d(&pose, frame_triple).ok()?;
            Some(stack_blocks_2d(&norm.primary, &norm.secondary))
        })
        .collect();
    if labeled2.is_empty() {
        return Err(CoreError::EmptyInput { context: "table2: no labeled 2-D poses".into() });
    }
    let labeled2_mat = DMatrix::from_fn(labeled2.len(), 2 * (p + s), |r, c| labeled2[r][c]);

    let mut gt_queries2 = Vec::new();
    let mut detected_queries2 = Vec::new();
    for &(_, frame) in &test_frames {
        for view in &frame.views {
            let Some(truth) = view.pose2d() else { continue };
            if !truth.primary_visible.iter().chain(&truth.secondary_visible).all(|&v| v) {
                continue;
            }
            if let Ok((norm, t)) = normalize_pose_2d(&truth, frame_triple) {
                gt_queries2.push(Query2D {
                    primary: norm.primary.iter().flat_map(|v| [v.x, v.y]).collect(),
                    transform: t,
                    truth: truth.clone(),
                });
            }
            if let Some(det) = detector {
                let (_, _, detected) = det.detect(&dataset.load_image(view)?)?;
                if let Ok((norm, t)) = normalize_pose_2d(&detected, frame_triple) {
                    detected_queries2.push(Query2D {
                        primary: norm.primary.iter().flat_map(|v| [v.x, v.y]).collect(),
                        transform: t,
                        truth: truth.clone(),
                    });
                }
            }
        }
    }

    let mut score2 = |method: BaselineMethod, input: &str, queries: &[Query2D]| -> Result<()> {
        if queries.is_empty() {
            return Ok(());
        }
        let predictions =
            impute_secondary(&labeled2_mat, queries.iter().map(|q| q.primary.clone()).collect(), 2 * p, method, als_config)?;
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (q, sec) in queries.iter().zip(&predictions) {
            let inv = q.transform.inverse();
            let coords: Vec<Vector2<f64>> =
                (0..s).map(|k| inv.apply(&Vector2::new(sec[2 * k], sec[2 * k + 1]))).collect();
            preds.push(Pose2D {
                primary: q.truth.primary.clone(),
                secondary: coords,
                primary_visible: q.truth.primary_visible.clone(),
                secondary_visible: vec![true; s],
            });
            truths.push(q.truth.clone());
        }
        push_rows(&mut rows, method, "2d", input, &preds, &truths, skeleton.ref_pair, &sec_names, s)
    };
    for method in BaselineMethod::all() {
        score2(method, "gt", &gt_queries2)?;
        if detector.is_some() {
            score2(method, "detected", &detected_queries2)?;
        }
    }

    Ok(rows)
}

/// Complete the secondary columns of every query under one method.
fn impute_secondary(
    labeled: &DMatrix<f64>,
    queries: Vec<Vec<f64>>,
    primary_cols: usize,
    method: BaselineMethod,
    als_config: &AlsConfig,
) -> Result<Vec<Vec<f64>>> {
    let n_queries = queries.len();
    match method {
        BaselineMethod::Als | BaselineMethod::Bals => {
            let config = AlsConfig { biased: method == BaselineMethod::Bals, ..als_config.clone() };
            let matrix = batch_query_matrix(labeled, &queries, primary_cols)?;
            let outcome = als_complete(&matrix, &config)?;
            let base = labeled.nrows();
            Ok((0..n_queries)
                .map(|qi| {
                    (primary_cols..labeled.ncols())
                        .map(|c| outcome.completed[(base + qi, c)])
                        .collect()
                })
                .collect())
        }
        BaselineMethod::Vae => {
            let mut vae = Vae::init(VaeConfig::for_pose(labeled.ncols(), primary_cols));
            let rows: Vec<Vec<f64>> =
                (0..labeled.nrows()).map(|r| labeled.row(r).iter().cloned().collect()).collect();
            vae.train(&rows)?;
            queries.iter().map(|q| vae.impute(q, primary_cols)).collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn push_rows(
    rows: &mut Vec<BaselineRow>,
    method: BaselineMethod,
    mode: &str,
    input: &str,
    preds: &[Pose2D],
    truths: &[Pose2D],
    ref_pair: [usize; 2],
    sec_names: &[String],
    s: usize,
) -> Result<()> {
    if preds.is_empty() {
        return Ok(());
    }
    let mut names = sec_names.to_vec();
    names.extend((0..truths[0].primary.len()).map(|i| format!("p{i}")));
    let result = pckh(preds, truths, &[0.5], ref_pair, names, s)?;
    let mut mean = 0.0;
    for (k, name) in sec_names.iter().enumerate() {
        let rate = result.rates[0][k];
        mean += rate;
        rows.push(BaselineRow {
            method: method.label().into(),
            mode: mode.into(),
            input: input.into(),
            landmark: name.clone(),
            rate,
        });
    }
    rows.push(BaselineRow {
        method: method.label().into(),
        mode: mode.into(),
        input: input.into(),
        landmark: "mean".into(),
        rate: mean / s as f64,
    });
    Ok(())
}
