//! Training losses: the labeled squared-pixel loss, the unlabeled
//! multiview loss (reprojection + cross-view contrastive terms), and the
//! combined objective.
//!
//! The unlabeled loss for a synchronized view pair is
//!
//! ```text
//!   sum_k |psi_k(I_i) - proj_i(X_k)|^2 + |psi_k(I_j) - proj_j(X_k)|^2   (reprojection)
//! - sum_k  ncc(feat_i(proj_i(X_k)), feat_j(proj_j(X_k)))               (self corr., maximized)
//! + sum_{k != l} ncc(feat(proj(X_k)), feat(proj(X_l)))                 (cross corr., minimized)
//! ```
//!
//! where `X_k` are the predicted world-frame secondary landmarks. The
//! within-view term is evaluated on both views and halved, which removes
//! the dependence on view order.

use serde::{Deserialize, Serialize};

use crate::detector::{sample_feature, DetectorConfig, DetectorOut};
use crate::error::{CoreError, Result};
use crate::geometry::diff::{canonical_frame_t, project_t, triangulate_dlt_t};
use crate::geometry::{triangulate_dlt, CameraParams, Pose2D, CONDITION_LIMIT};
use crate::predictor::Predictor;
use crate::tensor::{Tape, Tensor, Var};

use nalgebra::Vector2;
use std::collections::BTreeMap;

/// Numerical floor for the correlation denominator.
pub const NCC_EPSILON: f64 = 1e-12;

/// Per-term weights inside the unlabeled loss. The defaults follow the
/// plain sum; they exist as a configuration hook only.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub reprojection: f64,
    pub self_correlation: f64,
    pub cross_correlation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { reprojection: 1.0, self_correlation: 1.0, cross_correlation: 1.0 }
    }
}

/// Scalar summary of one optimization step's objective.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reprojection_i: f64,
    pub reprojection_j: f64,
    /// Subtracted from the total (the loss maximizes it).
    pub self_correlation: f64,
    pub cross_correlation: f64,
    pub labeled_secondary: f64,
    pub labeled_primary: f64,
    pub lambda_l: f64,
    pub total: f64,
}

/// Normalized cross-correlation `dot(a,b) / (|a||b| + eps)` on the tape.
/// Near-zero norms are stabilized by the epsilon; the flag reports it.
pub fn normalized_cross_correlation(tape: &mut Tape, a: Var, b: Var) -> Result<(Var, bool)> {
    let d = tape.dot(a, b)?;
    let na = tape.l2_norm(a);
    let nb = tape.l2_norm(b);
    let stabilized = tape.values(na)[0] < NCC_EPSILON || tape.values(nb)[0] < NCC_EPSILON;
    let prod = tape.mul(na, nb)?;
    let denom = tape.add_const(prod, NCC_EPSILON);
    Ok((tape.div(d, denom)?, stabilized))
}

fn squared_distance(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    Ok(tape.sum(sq))
}

fn sum_terms(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let all = tape.concat(terms)?;
    Ok(tape.sum(all))
}

/// Labeled loss split into its secondary and primary sums. `coords` uses
/// the detector channel order (secondary block first). Landmarks whose
/// truth is invisible contribute zero.
pub fn labeled_loss_terms(
    tape: &mut Tape,
    coords: &[Var],
    truth: &Pose2D,
) -> Result<(Var, Var)> {
    let s = truth.secondary.len();
    let p = truth.primary.len();
    if coords.len() != s + p {
        return Err(CoreError::LandmarkCountMismatch { expected: s + p, got: coords.len() });
    }
    let mut sec_terms = Vec::new();
    for (k, (coord, visible)) in truth.secondary.iter().zip(&truth.secondary_visible).enumerate() {
        if !visible {
            continue;
        }
        let t = tape.leaf(Tensor::from_vec(vec![coord.x, coord.y]));
        sec_terms.push(squared_distance(tape, coords[k], t)?);
    }
    let mut pri_terms = Vec::new();
    for (k, (coord, visible)) in truth.primary.iter().zip(&truth.primary_visible).enumerate() {
        if !visible {
            continue;
        }
        let t = tape.leaf(Tensor::from_vec(vec![coord.x, coord.y]));
        pri_terms.push(squared_distance(tape, coords[s + k], t)?);
    }
    Ok((sum_terms(tape, &sec_terms)?, sum_terms(tape, &pri_terms)?))
}

/// The full labeled loss: secondary sum plus primary sum.
pub fn labeled_loss(tape: &mut Tape, coords: &[Var], truth: &Pose2D) -> Result<Var> {
    let (sec, pri) = labeled_loss_terms(tape, coords, truth)?;
    tape.add(sec, pri)
}

/// One view's inputs to the unlabeled loss.
pub struct ViewInputs<'a> {
    pub cam: &'a CameraParams,
    /// Secondary-landmark pixel coordinates, `[2]` nodes.
    pub secondary_coords: &'a [Var],
    /// Feature map `[n, h, w]`.
    pub features: Var,
    pub det_config: &'a DetectorConfig,
}

/// Values of the four unlabeled terms at the current parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnlabeledTerms {
    pub reprojection_i: f64,
    pub reprojection_j: f64,
    pub self_correlation: f64,
    pub cross_correlation: f64,
}

/// Triangulate the detected primaries of a view pair, normalize, predict
/// the secondary landmarks, and map them back to world coordinates, all on
/// the tape. Returns `None` when any triangulation is degenerate or
/// low-confidence (the trainer skips and counts such pairs).
///
/// `primary_coords_*` use the primary block order; `frame_triple` indexes
/// that block. With `stop_gradient` the primary detections are detached so
/// the unlabeled loss cannot move the primary detector head.
#[allow(clippy::too_many_arguments)]
pub fn predict_world_secondary(
    tape: &mut Tape,
    primary_coords_i: &[Var],
    primary_coords_j: &[Var],
    cam_i: &CameraParams,
    cam_j: &CameraParams,
    predictor: &Predictor,
    predictor_vars: &BTreeMap<String, Var>,
    frame_triple: [usize; 3],
    stop_gradient: bool,
) -> Result<Option<Vec<Var>>> {
    let p = primary_coords_i.len();
    if p != predictor.config.num_primary || primary_coords_j.len() != p {
        return Err(CoreError::LandmarkCountMismatch { expected: predictor.config.num_primary, got: p });
    }
    // value-level degeneracy screen before building the differentiable graph
    for k in 0..p {
        let vi = tape.values(primary_coords_i[k]);
        let vj = tape.values(primary_coords_j[k]);
        let zi = Vector2::new(vi[0], vi[1]);
        let zj = Vector2::new(vj[0], vj[1]);
        match triangulate_dlt(&zi, &zj, cam_i, cam_j) {
            Ok(t) if !t.low_confidence && t.condition <= CONDITION_LIMIT => {}
            _ => return Ok(None),
        }
    }

    let mut primary_world = Vec::with_capacity(p);
    for k in 0..p {
        let (zi, zj) = if stop_gradient {
            let vi = tape.values(primary_coords_i[k]).to_vec();
            let vj = tape.values(primary_coords_j[k]).to_vec();
            (tape.leaf(Tensor::from_vec(vi)), tape.leaf(Tensor::from_vec(vj)))
        } else {
            (primary_coords_i[k], primary_coords_j[k])
        };
        primary_world.push(triangulate_dlt_t(tape, zi, zj, cam_i, cam_j)?);
    }

    let frame = canonical_frame_t(
        tape,
        primary_world[frame_triple[0]],
        primary_world[frame_triple[1]],
        primary_world[frame_triple[2]],
    )?;
    let mut canon = Vec::with_capacity(p);
    for &w in &primary_world {
        canon.push(frame.to_canonical(tape, w)?);
    }
    let flat = tape.concat(&canon)?;
    let pred = predictor.forward(tape, predictor_vars, flat)?;

    let s = predictor.config.num_secondary;
    let mut world = Vec::with_capacity(s);
    for k in 0..s {
        let ck = tape.slice(pred, 3 * k, &[3])?;
        let wk = frame.to_world(tape, ck)?;
        if !tape.value(wk).is_finite() {
            return Ok(None);
        }
        world.push(wk);
    }
    Ok(Some(world))
}

/// The four-term unlabeled multiview loss for one synchronized view pair.
/// Returns `None` when a predicted landmark sits behind either camera.
pub fn unlabeled_loss(
    tape: &mut Tape,
    view_i: &ViewInputs,
    view_j: &ViewInputs,
    predicted_x: &[Var],
    weights: &LossWeights,
) -> Result<Option<(Var, UnlabeledTerms)>> {
    let s = predicted_x.len();
    if view_i.secondary_coords.len() != s || view_j.secondary_coords.len() != s {
        return Err(CoreError::LandmarkCountMismatch {
            expected: s,
            got: view_i.secondary_coords.len(),
        });
    }
    // depth screen on values
    for &x in predicted_x {
        let v = tape.values(x);
        let w = nalgebra::Vector3::new(v[0], v[1], v[2]);
        if view_i.cam.depth(&w) <= 1e-9 || view_j.cam.depth(&w) <= 1e-9 {
            return Ok(None);
        }
    }

    let mut proj_i = Vec::with_capacity(s);
    let mut proj_j = Vec::with_capacity(s);
    for &x in predicted_x {
        proj_i.push(project_t(tape, view_i.cam, x)?);
        proj_j.push(project_t(tape, view_j.cam, x)?);
    }

    let mut reproj_i_terms = Vec::with_capacity(s);
    let mut reproj_j_terms = Vec::with_capacity(s);
    for k in 0..s {
        reproj_i_terms.push(squared_distance(tape, view_i.secondary_coords[k], proj_i[k])?);
        reproj_j_terms.push(squared_distance(tape, view_j.secondary_coords[k], proj_j[k])?);
    }
    let reproj_i = sum_terms(tape, &reproj_i_terms)?;
    let reproj_j = sum_terms(tape, &reproj_j_terms)?;

    // contrastive terms are skipped entirely when their weights are zero
    // (the geometric-only training mode)
    let contrastive =
        weights.self_correlation != 0.0 || weights.cross_correlation != 0.0;
    let (self_corr, cross_corr) = if contrastive {
        // features at the projected predicted locations
        let mut feat_i = Vec::with_capacity(s);
        let mut feat_j = Vec::with_capacity(s);
        for k in 0..s {
            let (fi, _) = sample_feature(tape, view_i.features, proj_i[k], view_i.det_config)?;
            let (fj, _) = sample_feature(tape, view_j.features, proj_j[k], view_j.det_config)?;
            feat_i.push(fi);
            feat_j.push(fj);
        }

        let mut self_terms = Vec::with_capacity(s);
        for k in 0..s {
            let (ncc, _) = normalized_cross_correlation(tape, feat_i[k], feat_j[k])?;
            self_terms.push(ncc);
        }
        let self_corr = sum_terms(tape, &self_terms)?;

        // within-view uniqueness, evaluated on both views and halved
        let mut cross_terms = Vec::new();
        for feats in [&feat_i, &feat_j] {
            for k in 0..s {
                for l in 0..s {
                    if k == l {
                        continue;
                    }
                    let (ncc, _) = normalized_cross_correlation(tape, feats[k], feats[l])?;
                    cross_terms.push(ncc);
                }
            }
        }
        let cross_sum = sum_terms(tape, &cross_terms)?;
        (self_corr, tape.scalar_mul(cross_sum, 0.5))
    } else {
        (tape.scalar(0.0), tape.scalar(0.0))
    };

    let reproj = tape.add(reproj_i, reproj_j)?;
    let wr = tape.scalar_mul(reproj, weights.reprojection);
    let ws = tape.scalar_mul(self_corr, -weights.self_correlation);
    let wc = tape.scalar_mul(cross_corr, weights.cross_correlation);
    let partial = tape.add(wr, ws)?;
    let total = tape.add(partial, wc)?;

    let terms = UnlabeledTerms {
        reprojection_i: tape.value(reproj_i).item(),
        reprojection_j: tape.value(reproj_j).item(),
        self_correlation: tape.value(self_corr).item(),
        cross_correlation: tape.value(cross_corr).item(),
    };
    Ok(Some((total, terms)))
}

/// One labeled item prepared on the tape.
pub struct LabeledItem<'a> {
    pub coords: &'a [Var],
    pub truth: &'a Pose2D,
}

/// Combined objective over a labeled batch and an unlabeled pair batch:
/// `sum(unlabeled totals) + lambda * sum(labeled losses)`.
pub fn total_objective(
    tape: &mut Tape,
    labeled: &[LabeledItem],
    unlabeled_totals: &[(Var, UnlabeledTerms)],
    lambda_l: f64,
) -> Result<(Var, LossBreakdown)> {
    if lambda_l < 0.0 {
        return Err(CoreError::InvalidConfig { reason: format!("lambda must be >= 0, got {lambda_l}") });
    }
    let mut breakdown = LossBreakdown { lambda_l, ..Default::default() };

    let mut sec_terms = Vec::new();
    let mut pri_terms = Vec::new();
    for item in labeled {
        let (sec, pri) = labeled_loss_terms(tape, item.coords, item.truth)?;
        breakdown.labeled_secondary += tape.value(sec).item();
        breakdown.labeled_primary += tape.value(pri).item();
        sec_terms.push(sec);
        pri_terms.push(pri);
    }
    let sec_sum = sum_terms(tape, &sec_terms)?;
    let pri_sum = sum_terms(tape, &pri_terms)?;
    let labeled_sum = tape.add(sec_sum, pri_sum)?;
    let weighted_labeled = tape.scalar_mul(labeled_sum, lambda_l);

    let mut unlabeled_vars = Vec::new();
    for (var, terms) in unlabeled_totals {
        breakdown.reprojection_i += terms.reprojection_i;
        breakdown.reprojection_j += terms.reprojection_j;
        breakdown.self_correlation += terms.self_correlation;
        breakdown.cross_correlation += terms.cross_correlation;
        unlabeled_vars.push(*var);
    }
    let unlabeled_sum = sum_terms(tape, &unlabeled_vars)?;

    let total = tape.add(unlabeled_sum, weighted_labeled)?;
    breakdown.total = tape.value(total).item();
    Ok((total, breakdown))
}

/// Run the detector forward pass and split the coordinate list into the
/// secondary/primary blocks (detector order keeps secondary first).
pub fn split_coords(out: &DetectorOut, num_secondary: usize) -> (Vec<Var>, Vec<Var>) {
    let secondary = out.coords[..num_secondary].to_vec();
    let primary = out.coords[num_secondary..].to_vec();
    (secondary, primary)
}

#[cfg(test)]
pub(crate) mod tests;
