use super::*;
use crate::detector::{Detector, DetectorConfig};
use crate::geometry::project;
use crate::predictor::{Predictor, PredictorConfig};
use crate::tensor::Tape;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ncc_value(a: Vec<f64>, b: Vec<f64>) -> f64 {
    let mut tape = Tape::new();
    let av = tape.leaf(Tensor::from_vec(a));
    let bv = tape.leaf(Tensor::from_vec(b));
    let (out, _) = normalized_cross_correlation(&mut tape, av, bv).unwrap();
    tape.value(out).item()
}

#[test]
fn ncc_identical_orthogonal_opposed() {
    assert!((ncc_value(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]) - 1.0).abs() < 1e-9);
    assert!(ncc_value(vec![1.0, 0.0], vec![0.0, 5.0]).abs() < 1e-12);
    assert!((ncc_value(vec![1.0, -2.0], vec![-1.0, 2.0]) + 1.0).abs() < 1e-9);
}

#[test]
fn ncc_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha: f64 = rng.random_range(0.01..50.0);
        let beta: f64 = rng.random_range(0.01..50.0);
        let base = ncc_value(a.clone(), b.clone());
        let scaled = ncc_value(
            a.iter().map(|v| alpha * v).collect(),
            b.iter().map(|v| beta * v).collect(),
        );
        assert!((base - scaled).abs() < 1e-9, "{base} vs {scaled}");
    }
}

#[test]
fn ncc_flags_near_zero_norm() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let b = tape.leaf(Tensor::from_vec(vec![1.0, 0.0]));
    let (out, stabilized) = normalized_cross_correlation(&mut tape, a, b).unwrap();
    assert!(stabilized);
    assert!(tape.value(out).item().abs() < 1e-9);
}

fn coords_from(tape: &mut Tape, points: &[Vector2<f64>]) -> Vec<Var> {
    points.iter().map(|p| tape.leaf(Tensor::from_vec(vec![p.x, p.y]))).collect()
}

#[test]
fn labeled_loss_zero_on_exact_detections() {
    let truth = Pose2D::all_visible(
        vec![Vector2::new(3.0, 4.0), Vector2::new(10.0, 2.0)],
        vec![Vector2::new(7.0, 7.0)],
    );
    let mut tape = Tape::new();
    let all: Vec<Vector2<f64>> =
        truth.secondary.iter().chain(&truth.primary).cloned().collect();
    let coords = coords_from(&mut tape, &all);
    let loss = labeled_loss(&mut tape, &coords, &truth).unwrap();
    assert_eq!(tape.value(loss).item(), 0.0);
}

#[test]
fn labeled_loss_three_four_five() {
    let truth = Pose2D::all_visible(vec![Vector2::new(1.0, 1.0)], vec![Vector2::new(5.0, 5.0)]);
    let mut tape = Tape::new();
    // secondary detection off by (3, 4) px -> squared distance 25
    let coords = coords_from(&mut tape, &[Vector2::new(8.0, 9.0), Vector2::new(1.0, 1.0)]);
    let loss = labeled_loss(&mut tape, &coords, &truth).unwrap();
    assert!((tape.value(loss).item() - 25.0).abs() < 1e-12);
}

#[test]
fn labeled_loss_matches_direct_summation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let rand_pt = |rng: &mut ChaCha8Rng| {
            Vector2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))
        };
        let mut truth = Pose2D::all_visible(
            (0..5).map(|_| rand_pt(&mut rng)).collect(),
            (0..3).map(|_| rand_pt(&mut rng)).collect(),
        );
        truth.primary_visible[2] = false;
        truth.secondary_visible[0] = false;
        let det_sec: Vec<Vector2<f64>> = (0..3).map(|_| rand_pt(&mut rng)).collect();
        let det_pri: Vec<Vector2<f64>> = (0..5).map(|_| rand_pt(&mut rng)).collect();

        let mut oracle = 0.0;
        for k in 0..3 {
            if truth.secondary_visible[k] {
                oracle += (det_sec[k] - truth.secondary[k]).norm_squared();
            }
        }
        for k in 0..5 {
            if truth.primary_visible[k] {
                oracle += (det_pri[k] - truth.primary[k]).norm_squared();
            }
        }

        let mut tape = Tape::new();
        let all: Vec<Vector2<f64>> = det_sec.iter().chain(&det_pri).cloned().collect();
        let coords = coords_from(&mut tape, &all);
        let loss = labeled_loss(&mut tape, &coords, &truth).unwrap();
        assert!((tape.value(loss).item() - oracle).abs() < 1e-9);
    }
}

#[test]
fn labeled_loss_rejects_count_mismatch() {
    let truth = Pose2D::all_visible(vec![Vector2::new(1.0, 1.0)], vec![Vector2::new(5.0, 5.0)]);
    let mut tape = Tape::new();
    let coords = coords_from(&mut tape, &[Vector2::new(0.0, 0.0)]);
    assert!(matches!(
        labeled_loss(&mut tape, &coords, &truth),
        Err(CoreError::LandmarkCountMismatch { .. })
    ));
}

/// Identity-intrinsics cameras whose projections of chosen points land on
/// exact integer pixels, so feature lookups hit grid nodes exactly.
fn unit_cam(name: &str, tx: f64) -> CameraParams {
    CameraParams {
        name: name.into(),
        k: Matrix3::identity(),
        r: Matrix3::identity(),
        t: Vector3::new(tx, 0.0, 0.0),
        width: 8,
        height: 8,
    }
}

fn grid_config() -> DetectorConfig {
    DetectorConfig {
        image_size: (8, 8),
        heatmap_size: (8, 8),
        feature_dim: 2,
        temperature: 1.0,
        stage_channels: [1, 1, 1],
        stage_strides: [1, 1, 1],
        num_primary: 1,
        num_secondary: 2,
    }
}

#[test]
fn unlabeled_loss_constructed_case() {
    // two world points at depth 1 project to integer pixels in both views
    let cam_i = unit_cam("i", 0.0);
    let cam_j = unit_cam("j", 1.0);
    let x1 = Vector3::new(2.0, 3.0, 1.0); // proj_i (2,3), proj_j (3,3)
    let x2 = Vector3::new(5.0, 6.0, 1.0); // proj_i (5,6), proj_j (6,6)
    let config = grid_config();

    // orthogonal unit features per landmark, identical across views
    let mut feat_i = vec![0.0; 2 * 8 * 8];
    let mut feat_j = vec![0.0; 2 * 8 * 8];
    feat_i[3 * 8 + 2] = 1.0; // channel 0 at (2,3)
    feat_i[64 + 6 * 8 + 5] = 1.0; // channel 1 at (5,6)
    feat_j[3 * 8 + 3] = 1.0;
    feat_j[64 + 6 * 8 + 6] = 1.0;

    let mut tape = Tape::new();
    let fi = tape.leaf(Tensor::new(vec![2, 8, 8], feat_i).unwrap());
    let fj = tape.leaf(Tensor::new(vec![2, 8, 8], feat_j).unwrap());
    let det_i = coords_from(&mut tape, &[Vector2::new(2.0, 3.0), Vector2::new(5.0, 6.0)]);
    let det_j = coords_from(&mut tape, &[Vector2::new(3.0, 3.0), Vector2::new(6.0, 6.0)]);
    let xs = vec![
        tape.leaf(Tensor::from_vec(vec![x1.x, x1.y, x1.z])),
        tape.leaf(Tensor::from_vec(vec![x2.x, x2.y, x2.z])),
    ];
    let view_i = ViewInputs { cam: &cam_i, secondary_coords: &det_i, features: fi, det_config: &config };
    let view_j = ViewInputs { cam: &cam_j, secondary_coords: &det_j, features: fj, det_config: &config };
    let (_, terms) = unlabeled_loss(&mut tape, &view_i, &view_j, &xs, &LossWeights::default())
        .unwrap()
        .unwrap();
    assert!(terms.reprojection_i.abs() < 1e-18, "reprojection must be exactly zero");
    assert!(terms.reprojection_j.abs() < 1e-18);
    assert!((terms.self_correlation - 2.0).abs() < 1e-9, "one per landmark");
    assert!(terms.cross_correlation.abs() < 1e-9);
}

#[test]
fn unlabeled_loss_degenerate_features_sanity() {
    // identical feature vectors everywhere: self and cross both saturate
    let cam_i = unit_cam("i", 0.0);
    let cam_j = unit_cam("j", 1.0);
    let config = grid_config();
    let mut tape = Tape::new();
    let constant = |tape: &mut Tape| {
        let mut v = vec![0.3; 64];
        v.extend(vec![0.7; 64]);
        tape.leaf(Tensor::new(vec![2, 8, 8], v).unwrap())
    };
    let fi = constant(&mut tape);
    let fj = constant(&mut tape);
    let det_i = coords_from(&mut tape, &[Vector2::new(2.0, 3.0), Vector2::new(5.0, 6.0)]);
    let det_j = coords_from(&mut tape, &[Vector2::new(3.0, 3.0), Vector2::new(6.0, 6.0)]);
    let xs = vec![
        tape.leaf(Tensor::from_vec(vec![2.0, 3.0, 1.0])),
        tape.leaf(Tensor::from_vec(vec![5.0, 6.0, 1.0])),
    ];
    let view_i = ViewInputs { cam: &cam_i, secondary_coords: &det_i, features: fi, det_config: &config };
    let view_j = ViewInputs { cam: &cam_j, secondary_coords: &det_j, features: fj, det_config: &config };
    let (_, terms) = unlabeled_loss(&mut tape, &view_i, &view_j, &xs, &LossWeights::default())
        .unwrap()
        .unwrap();
    assert!((terms.self_correlation - 2.0).abs() < 1e-9);
    assert!((terms.cross_correlation - 2.0).abs() < 1e-9);
}

/// Independent reimplementation oracle for the four-term formula.
#[test]
fn unlabeled_loss_matches_independent_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cam_i = crate::geometry::tests::ring_camera(0.4, 3.0, 0.2, 40.0, 32);
    let cam_j = crate::geometry::tests::ring_camera(1.5, 3.0, -0.1, 40.0, 32);
    let config = DetectorConfig {
        image_size: (32, 32),
        heatmap_size: (8, 8),
        feature_dim: 3,
        temperature: 1.0,
        stage_channels: [1, 1, 1],
        stage_strides: [2, 2, 1],
        num_primary: 1,
        num_secondary: 2,
    };
    for _ in 0..20 {
        let xs_world: Vec<Vector3<f64>> = (0..2)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.3..0.3),
                )
            })
            .collect();
        let fvals_i: Vec<f64> = (0..3 * 64).map(|_| rng.random_range(0.1..1.0)).collect();
        let fvals_j: Vec<f64> = (0..3 * 64).map(|_| rng.random_range(0.1..1.0)).collect();
        let det_i: Vec<Vector2<f64>> = (0..2)
            .map(|_| Vector2::new(rng.random_range(5.0..27.0), rng.random_range(5.0..27.0)))
            .collect();
        let det_j: Vec<Vector2<f64>> = (0..2)
            .map(|_| Vector2::new(rng.random_range(5.0..27.0), rng.random_range(5.0..27.0)))
            .collect();

        let mut tape = Tape::new();
        let fi = tape.leaf(Tensor::new(vec![3, 8, 8], fvals_i.clone()).unwrap());
        let fj = tape.leaf(Tensor::new(vec![3, 8, 8], fvals_j.clone()).unwrap());
        let ci = coords_from(&mut tape, &det_i);
        let cj = coords_from(&mut tape, &det_j);
        let xs: Vec<Var> = xs_world
            .iter()
            .map(|x| tape.leaf(Tensor::from_vec(vec![x.x, x.y, x.z])))
            .collect();
        let view_i = ViewInputs { cam: &cam_i, secondary_coords: &ci, features: fi, det_config: &config };
        let view_j = ViewInputs { cam: &cam_j, secondary_coords: &cj, features: fj, det_config: &config };
        let (total, _) = unlabeled_loss(&mut tape, &view_i, &view_j, &xs, &LossWeights::default())
            .unwrap()
            .unwrap();

        // ---- independent evaluation in plain arithmetic ----
        let sample = |fv: &[f64], px: Vector2<f64>| -> Vec<f64> {
            // pixel -> 8x8 grid (stride 4), then bilinear
            let gx = (px.x + 0.5) / 4.0 - 0.5;
            let gy = (px.y + 0.5) / 4.0 - 0.5;
            let x0 = gx.floor().clamp(0.0, 7.0) as usize;
            let y0 = gy.floor().clamp(0.0, 7.0) as usize;
            let x1 = (x0 + 1).min(7);
            let y1 = (y0 + 1).min(7);
            let fx = gx - x0 as f64;
            let fy = gy - y0 as f64;
            (0..3)
                .map(|c| {
                    let at = |y: usize, x: usize| fv[c * 64 + y * 8 + x];
                    (1.0 - fx) * (1.0 - fy) * at(y0, x0)
                        + fx * (1.0 - fy) * at(y0, x1)
                        + (1.0 - fx) * fy * at(y1, x0)
                        + fx * fy * at(y1, x1)
                })
                .collect()
        };
        let ncc = |a: &[f64], b: &[f64]| -> f64 {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb + NCC_EPSILON)
        };
        let mut expected = 0.0;
        let mut feats_i = Vec::new();
        let mut feats_j = Vec::new();
        for (k, x) in xs_world.iter().enumerate() {
            let pi = project(&cam_i, x).unwrap();
            let pj = project(&cam_j, x).unwrap();
            expected += (det_i[k] - pi).norm_squared() + (det_j[k] - pj).norm_squared();
            feats_i.push(sample(&fvals_i, pi));
            feats_j.push(sample(&fvals_j, pj));
        }
        for k in 0..2 {
            expected -= ncc(&feats_i[k], &feats_j[k]);
        }
        for feats in [&feats_i, &feats_j] {
            for k in 0..2 {
                for l in 0..2 {
                    if k != l {
                        expected += 0.5 * ncc(&feats[k], &feats[l]);
                    }
                }
            }
        }
        let got = tape.value(total).item();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }
}

#[test]
fn unlabeled_loss_is_symmetric_in_view_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let cam_i = crate::geometry::tests::ring_camera(0.2, 3.0, 0.2, 40.0, 32);
    let cam_j = crate::geometry::tests::ring_camera(1.3, 3.0, -0.3, 40.0, 32);
    let config = DetectorConfig {
        image_size: (32, 32),
        heatmap_size: (8, 8),
        feature_dim: 3,
        temperature: 1.0,
        stage_channels: [1, 1, 1],
        stage_strides: [2, 2, 1],
        num_primary: 1,
        num_secondary: 2,
    };
    let xs_world: Vec<Vector3<f64>> =
        (0..2).map(|_| Vector3::new(rng.random_range(-0.4..0.4), 0.1, 0.0)).collect();
    let fvals_i: Vec<f64> = (0..3 * 64).map(|_| rng.random_range(0.1..1.0)).collect();
    let fvals_j: Vec<f64> = (0..3 * 64).map(|_| rng.random_range(0.1..1.0)).collect();
    let det: Vec<Vector2<f64>> = (0..2)
        .map(|_| Vector2::new(rng.random_range(8.0..24.0), rng.random_range(8.0..24.0)))
        .collect();

    let run = |swap: bool| -> f64 {
        let mut tape = Tape::new();
        let fi = tape.leaf(Tensor::new(vec![3, 8, 8], fvals_i.clone()).unwrap());
        let fj = tape.leaf(Tensor::new(vec![3, 8, 8], fvals_j.clone()).unwrap());
        let ci = coords_from(&mut tape, &det);
        let cj = coords_from(&mut tape, &det);
        let xs: Vec<Var> = xs_world
            .iter()
            .map(|x| tape.leaf(Tensor::from_vec(vec![x.x, x.y, x.z])))
            .collect();
        let vi = ViewInputs { cam: &cam_i, secondary_coords: &ci, features: fi, det_config: &config };
        let vj = ViewInputs { cam: &cam_j, secondary_coords: &cj, features: fj, det_config: &config };
        let (a, b) = if swap { (&vj, &vi) } else { (&vi, &vj) };
        let (total, _) = unlabeled_loss(&mut tape, a, b, &xs, &LossWeights::default())
            .unwrap()
            .unwrap();
        tape.value(total).item()
    };
    assert!((run(false) - run(true)).abs() < 1e-9);
}

#[test]
fn total_objective_breakdown_identity_and_empty_unlabeled() {
    let truth = Pose2D::all_visible(vec![Vector2::new(4.0, 4.0)], vec![Vector2::new(6.0, 2.0)]);
    let mut tape = Tape::new();
    let coords = coords_from(&mut tape, &[Vector2::new(7.0, 8.0), Vector2::new(5.0, 2.0)]);
    let item = LabeledItem { coords: &coords, truth: &truth };
    let (total, b) = total_objective(&mut tape, &[item], &[], 10.0).unwrap();
    // empty unlabeled batch: total = lambda * labeled sum
    let expect = 10.0 * (b.labeled_secondary + b.labeled_primary);
    assert!((tape.value(total).item() - expect).abs() < 1e-9);
    let reconstructed = b.reprojection_i + b.reprojection_j - b.self_correlation
        + b.cross_correlation
        + b.lambda_l * (b.labeled_secondary + b.labeled_primary);
    assert!((b.total - reconstructed).abs() < 1e-9);
}

#[test]
fn total_objective_rejects_negative_lambda() {
    let mut tape = Tape::new();
    assert!(total_objective(&mut tape, &[], &[], -1.0).is_err());
}

/// Derived oracle: the gradient of the complete objective on a toy scene
/// matches central finite differences for every parameter block.
#[test]
fn total_objective_gradients_match_finite_differences() {
    let det_config = DetectorConfig {
        image_size: (16, 16),
        heatmap_size: (4, 4),
        feature_dim: 4,
        temperature: 1.0,
        stage_channels: [3, 4, 5],
        stage_strides: [2, 2, 1],
        num_primary: 3,
        num_secondary: 2,
    };
    let detector = Detector::init(det_config.clone(), 41).unwrap();
    let predictor = Predictor::init(
        PredictorConfig { num_primary: 3, num_secondary: 2, hidden: 8 },
        43,
    );
    let cam_i = crate::geometry::tests::ring_camera(0.3, 3.0, 0.2, 13.0, 16);
    let cam_j = crate::geometry::tests::ring_camera(1.4, 3.0, -0.2, 13.0, 16);

    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let img_i: Vec<f64> = (0..3 * 256).map(|_| rng.random_range(0.0..1.0)).collect();
    let img_j: Vec<f64> = (0..3 * 256).map(|_| rng.random_range(0.0..1.0)).collect();
    let truth = Pose2D::all_visible(
        (0..3).map(|_| Vector2::new(rng.random_range(2.0..14.0), rng.random_range(2.0..14.0))).collect(),
        (0..2).map(|_| Vector2::new(rng.random_range(2.0..14.0), rng.random_range(2.0..14.0))).collect(),
    );

    // collect every parameter as an input to differentiate
    let mut inputs = Vec::new();
    let mut names = Vec::new();
    for (name, t) in detector.params.iter().chain(predictor.params.iter()) {
        inputs.push(t.clone());
        names.push(name.clone());
    }

    let det_config2 = det_config.clone();
    crate::tensor::tests::finite_difference_check(
        &inputs,
        move |tape, vars| {
            // forward reads weights through the handle map, so the perturbed
            // leaf values are what gets evaluated
            let mut handles = std::collections::BTreeMap::new();
            for (i, name) in names.iter().enumerate() {
                handles.insert(name.clone(), vars[i]);
            }
            let iv = tape.leaf(Tensor::new(vec![3, 16, 16], img_i.clone()).unwrap());
            let jv = tape.leaf(Tensor::new(vec![3, 16, 16], img_j.clone()).unwrap());
            let out_i = detector.forward(tape, &handles, iv).unwrap();
            let out_j = detector.forward(tape, &handles, jv).unwrap();
            let (sec_i, pri_i) = split_coords(&out_i, 2);
            let (sec_j, pri_j) = split_coords(&out_j, 2);
            let xs = predict_world_secondary(
                tape,
                &pri_i,
                &pri_j,
                &cam_i,
                &cam_j,
                &predictor,
                &handles,
                [0, 1, 2],
                false,
            )
            .unwrap()
            .expect("non-degenerate toy scene");
            let view_i = ViewInputs {
                cam: &cam_i,
                secondary_coords: &sec_i,
                features: out_i.features,
                det_config: &det_config2,
            };
            let view_j = ViewInputs {
                cam: &cam_j,
                secondary_coords: &sec_j,
                features: out_j.features,
                det_config: &det_config2,
            };
            let pair = unlabeled_loss(tape, &view_i, &view_j, &xs, &LossWeights::default())
                .unwrap()
                .expect("in front of both cameras");
            let item = LabeledItem { coords: &out_i.coords, truth: &truth };
            let (total, _) = total_objective(tape, &[item], &[pair], 10.0).unwrap();
            total
        },
        1e-4,
    );
}

#[test]
fn stop_gradient_detaches_primary_detections() {
    let predictor = Predictor::init(
        PredictorConfig { num_primary: 3, num_secondary: 1, hidden: 8 },
        7,
    );
    let cam_i = crate::geometry::tests::ring_camera(0.2, 3.0, 0.1, 13.0, 16);
    let cam_j = crate::geometry::tests::ring_camera(1.2, 3.0, -0.1, 13.0, 16);
    // primary world points projected into both views
    let world = [
        Vector3::new(0.1, 0.0, 0.0),
        Vector3::new(-0.2, 0.3, 0.1),
        Vector3::new(0.3, -0.1, 0.4),
    ];

    for stop in [false, true] {
        let mut tape = Tape::new();
        let pvars = predictor.params.register(&mut tape);
        let mut pi = Vec::new();
        let mut pj = Vec::new();
        for w in &world {
            let a = project(&cam_i, w).unwrap();
            let b = project(&cam_j, w).unwrap();
            pi.push(tape.leaf(Tensor::from_vec(vec![a.x, a.y])));
            pj.push(tape.leaf(Tensor::from_vec(vec![b.x, b.y])));
        }
        let xs = predict_world_secondary(
            &mut tape, &pi, &pj, &cam_i, &cam_j, &predictor, &pvars, [0, 1, 2], stop,
        )
        .unwrap()
        .unwrap();
        let sq = tape.square(xs[0]);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        let has_grad = grads.get(pi[0]).map(|g| g.values().iter().any(|v| *v != 0.0));
        if stop {
            assert!(has_grad.is_none() || !has_grad.unwrap());
        } else {
            assert!(has_grad.unwrap());
        }
    }
}

#[test]
fn degenerate_camera_pair_is_skipped() {
    let predictor = Predictor::init(
        PredictorConfig { num_primary: 3, num_secondary: 1, hidden: 8 },
        7,
    );
    let cam = crate::geometry::tests::ring_camera(0.2, 3.0, 0.1, 13.0, 16);
    let mut tape = Tape::new();
    let pvars = predictor.params.register(&mut tape);
    let coords: Vec<Var> = (0..3)
        .map(|k| tape.leaf(Tensor::from_vec(vec![4.0 + k as f64, 5.0])))
        .collect();
    let out = predict_world_secondary(
        &mut tape,
        &coords,
        &coords,
        &cam,
        &cam.clone(),
        &predictor,
        &pvars,
        [0, 1, 2],
        false,
    )
    .unwrap();
    assert!(out.is_none());
}
