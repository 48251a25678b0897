//! Two-phase semi-supervised training, the mode ablation, and the
//! label-ratio study.
//!
//! Phase 1 pretrains the detector on the labeled loss and fits the
//! predictor by regression on triangulated labeled poses. Phase 2 refines
//! everything under the mode's total objective. Batch items run on
//! independent tapes (optionally in parallel); gradients are reduced in
//! batch order, so results are identical for any worker count.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DetectorConfig, Image};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate_detector, AblationRow};
use crate::geometry::diff::{project_t, triangulate_dlt_t};
use crate::geometry::{normalize_pose, triangulate_dlt, CameraParams, CoordUnits, Pose2D, Pose3D, CONDITION_LIMIT};
use crate::losses::{
    labeled_loss_terms, predict_world_secondary, split_coords, unlabeled_loss, LossBreakdown,
    LossWeights, UnlabeledTerms, ViewInputs,
};
use crate::optim::{Adam, ParamSet};
use crate::predictor::{Predictor, PredictorConfig};
use crate::synthdata::{Dataset, Split};
use crate::tensor::{Tape, Tensor, Var};
use crate::util::{format_float, write_csv};

/// Exactly one self-supervision mode is active per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Labeled loss only.
    Supervised,
    /// Labeled loss plus reprojection of directly triangulated secondary
    /// detections (no predictor).
    TriangulationBaseline,
    /// Labeled loss plus predictor-reprojection consistency.
    Geometric,
    /// Geometric plus the contrastive feature terms.
    Full,
}

impl TrainMode {
    pub fn label(self) -> &'static str {
        match self {
            TrainMode::Supervised => "l",
            TrainMode::TriangulationBaseline => "l+ut",
            TrainMode::Geometric => "l+ug",
            TrainMode::Full => "l+ug+uc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l" => Ok(TrainMode::Supervised),
            "l+ut" => Ok(TrainMode::TriangulationBaseline),
            "l+ug" => Ok(TrainMode::Geometric),
            "l+ug+uc" => Ok(TrainMode::Full),
            other => Err(CoreError::InvalidConfig { reason: format!("unknown mode {other:?}") }),
        }
    }

    pub fn all() -> [TrainMode; 4] {
        [
            TrainMode::Supervised,
            TrainMode::TriangulationBaseline,
            TrainMode::Geometric,
            TrainMode::Full,
        ]
    }

    pub fn uses_pairs(self) -> bool {
        self != TrainMode::Supervised
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub lambda_l: f64,
    pub seed: u64,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    /// Steps of the phase-1 predictor regression.
    pub predictor_steps: usize,
    /// Learning rate for the predictor regression (the tiny MLP converges
    /// far faster than the detector).
    pub predictor_lr: f64,
    /// Optional override of the labeled fraction; selects a deterministic
    /// subset of the dataset's labeled frames.
    pub label_ratio: Option<f64>,
    pub weights: LossWeights,
    /// Detach primary detections from the unlabeled loss.
    pub stop_gradient_primary: bool,
    pub detector: DetectorConfig,
    pub predictor: PredictorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Full,
            batch_size: 10,
            learning_rate: 1e-4,
            decay_rate: 0.8,
            decay_steps: 2000,
            lambda_l: 10.0,
            seed: 7,
            phase1_steps: 5000,
            phase2_steps: 2000,
            predictor_steps: 3000,
            predictor_lr: 3e-3,
            label_ratio: None,
            weights: LossWeights::default(),
            stop_gradient_primary: false,
            detector: DetectorConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::InvalidConfig { reason: "batch size must be >= 1".into() });
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("decay_rate", self.decay_rate),
            ("predictor_lr", self.predictor_lr),
        ] {
            if v <= 0.0 {
                return Err(CoreError::InvalidConfig { reason: format!("{name} must be positive") });
            }
        }
        if self.lambda_l < 0.0 {
            return Err(CoreError::InvalidConfig { reason: "lambda must be >= 0".into() });
        }
        self.detector.validate()
    }

    /// Size the detector and predictor for a dataset's geometry.
    pub fn for_dataset(mut self, dataset: &Dataset) -> Self {
        let size = dataset.manifest.config.image_size;
        let stride: usize = self.detector.stage_strides.iter().product();
        self.detector.image_size = (size, size);
        self.detector.heatmap_size = (size / stride, size / stride);
        self.detector.num_primary = dataset.skeleton.num_primary();
        self.detector.num_secondary = dataset.skeleton.num_secondary();
        self.predictor.num_primary = dataset.skeleton.num_primary();
        self.predictor.num_secondary = dataset.skeleton.num_secondary();
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    pub phase: u8,
    pub step: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub breakdown: LossBreakdown,
}

pub struct TrainOutcome {
    pub detector: Detector,
    pub predictor: Predictor,
    /// Models as they stood at the end of phase 1 (pretraining only).
    pub phase1_detector: Detector,
    pub phase1_predictor: Predictor,
    pub log: Vec<LogRow>,
    /// Reason when the run stopped early on a non-finite loss; the model
    /// fields hold the last good snapshot then.
    pub aborted: Option<String>,
    pub skipped_pairs: usize,
}

/// A labeled training item: one view of one frame with at least primary
/// truth. Frames without secondary labels get invisible secondary entries,
/// which contribute zero to the loss.
struct LabeledRef {
    frame_idx: usize,
    view_idx: usize,
    truth: Pose2D,
}

struct Pools {
    labeled: Vec<LabeledRef>,
    /// Frames with full labels and >= 2 labeled views (predictor regression).
    full_frames: Vec<usize>,
    /// Frames with >= 2 image views (the paper's pair set D).
    pair_frames: Vec<usize>,
}

fn build_pools(dataset: &Dataset, config: &TrainConfig) -> Result<Pools> {
    // deterministic ratio subsetting of the labeled frames
    let full_ids: Vec<usize> = dataset
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.split == Split::LabeledFull)
        .map(|(i, _)| i)
        .collect();
    let prim_ids: Vec<usize> = dataset
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.split == Split::LabeledPrimary)
        .map(|(i, _)| i)
        .collect();
    let pool_total = dataset.frames.iter().filter(|f| f.split != Split::Test).count();

    let (selected_full, selected_prim) = match config.label_ratio {
        None => (full_ids, prim_ids),
        Some(r) => {
            if !(r > 0.0 && r <= 1.0) {
                return Err(CoreError::InvalidConfig {
                    reason: format!("label ratio must be in (0,1], got {r}"),
                });
            }
            let target = ((r * pool_total as f64).round() as usize).max(1);
            if target > full_ids.len() {
                return Err(CoreError::Dataset {
                    reason: format!(
                        "ratio {r} needs {target} fully labeled frames, dataset has {}",
                        full_ids.len()
                    ),
                });
            }
            let mut order = full_ids.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4a7e);
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let full: Vec<usize> = order[..target].to_vec();
            let extra = (2 * target).min(target + prim_ids.len()) - target;
            let mut porder = prim_ids.clone();
            for i in (1..porder.len()).rev() {
                let j = rng.random_range(0..=i);
                porder.swap(i, j);
            }
            (full, porder[..extra].to_vec())
        }
    };
    if selected_full.is_empty() {
        return Err(CoreError::EmptyInput { context: "no labeled frames".into() });
    }

    let mut labeled = Vec::new();
    let s = dataset.skeleton.num_secondary();
    for (&fi, with_secondary) in selected_full
        .iter()
        .map(|f| (f, true))
        .chain(selected_prim.iter().map(|f| (f, false)))
    {
        let frame = &dataset.frames[fi];
        for (vi, view) in frame.views.iter().enumerate() {
            if view.image_path.is_none() {
                continue;
            }
            let Some(p) = view.primary2d.as_ref() else { continue };
            let truth = if with_secondary {
                match view.pose2d() {
                    Some(t) => t,
                    None => continue,
                }
            } else {
                Pose2D {
                    primary: p.coords.clone(),
                    secondary: vec![Vector2::zeros(); s],
                    primary_visible: p.visible.clone(),
                    secondary_visible: vec![false; s],
                }
            };
            labeled.push(LabeledRef { frame_idx: fi, view_idx: vi, truth });
        }
    }
    if labeled.is_empty() {
        return Err(CoreError::EmptyInput { context: "no labeled views with images".into() });
    }

    let full_frames: Vec<usize> = selected_full
        .iter()
        .cloned()
        .filter(|&fi| {
            dataset.frames[fi]
                .views
                .iter()
                .filter(|v| v.primary2d.is_some() && v.secondary2d.is_some())
                .count()
                >= 2
        })
        .collect();

    let pair_frames: Vec<usize> = dataset
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            f.split != Split::Test && f.views.iter().filter(|v| v.image_path.is_some()).count() >= 2
        })
        .map(|(i, _)| i)
        .collect();
    Ok(Pools { labeled, full_frames, pair_frames })
}

/// Images cached up front so the step loop does no file IO.
struct ImageCache {
    images: Vec<Vec<Option<Image>>>,
}

impl ImageCache {
    fn build(dataset: &Dataset, pools: &Pools) -> Result<Self> {
        let mut wanted: Vec<Vec<bool>> = dataset
            .frames
            .iter()
            .map(|f| vec![false; f.views.len()])
            .collect();
        for item in &pools.labeled {
            wanted[item.frame_idx][item.view_idx] = true;
        }
        for &fi in &pools.pair_frames {
            for (vi, view) in dataset.frames[fi].views.iter().enumerate() {
                if view.image_path.is_some() {
                    wanted[fi][vi] = true;
                }
            }
        }
        let images = dataset
            .frames
            .par_iter()
            .zip(&wanted)
            .map(|(frame, w)| {
                frame
                    .views
                    .iter()
                    .zip(w)
                    .map(|(view, &load)| {
                        if load {
                            dataset.load_image(view).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { images })
    }

    fn get(&self, frame_idx: usize, view_idx: usize) -> &Image {
        self.images[frame_idx][view_idx].as_ref().expect("image preloaded")
    }
}

/// Reprojection loss of directly triangulated secondary detections (the
/// predictor-free self-supervision baseline). Returns `None` on degenerate
/// triangulations.
pub fn triangulation_baseline_loss(
    tape: &mut Tape,
    secondary_i: &[Var],
    secondary_j: &[Var],
    cam_i: &CameraParams,
    cam_j: &CameraParams,
) -> Result<Option<(Var, f64)>> {
    let s = secondary_i.len();
    if secondary_j.len() != s {
        return Err(CoreError::LandmarkCountMismatch { expected: s, got: secondary_j.len() });
    }
    for k in 0..s {
        let vi = tape.values(secondary_i[k]);
        let vj = tape.values(secondary_j[k]);
        let zi = Vector2::new(vi[0], vi[1]);
        let zj = Vector2::new(vj[0], vj[1]);
        match triangulate_dlt(&zi, &zj, cam_i, cam_j) {
            Ok(t) if !t.low_confidence && t.condition <= CONDITION_LIMIT => {
                if cam_i.depth(&t.point) <= 1e-9 || cam_j.depth(&t.point) <= 1e-9 {
                    return Ok(None);
                }
            }
            _ => return Ok(None),
        }
    }
    let mut terms = Vec::with_capacity(2 * s);
    for k in 0..s {
        let x = triangulate_dlt_t(tape, secondary_i[k], secondary_j[k], cam_i, cam_j)?;
        let pi = project_t(tape, cam_i, x)?;
        let pj = project_t(tape, cam_j, x)?;
        for (obs, proj) in [(secondary_i[k], pi), (secondary_j[k], pj)] {
            let d = tape.sub(obs, proj)?;
            let sq = tape.square(d);
            terms.push(tape.sum(sq));
        }
    }
    let all = tape.concat(&terms)?;
    let total = tape.sum(all);
    let value = tape.value(total).item();
    Ok(Some((total, value)))
}

type GradMap = BTreeMap<String, Vec<f64>>;

fn scale_into(target: &mut GradMap, source: &GradMap, factor: f64) {
    for (path, g) in source {
        let slot = target.entry(path.clone()).or_insert_with(|| vec![0.0; g.len()]);
        for (t, &v) in slot.iter_mut().zip(g) {
            *t += factor * v;
        }
    }
}

/// One labeled item's gradients (unweighted L_L) plus its two terms.
fn labeled_item(
    detector: &Detector,
    predictor: &Predictor,
    image: &Image,
    truth: &Pose2D,
) -> Result<(GradMap, f64, f64)> {
    let mut tape = Tape::new();
    let mut vars = detector.params.register(&mut tape);
    vars.extend(predictor.params.register(&mut tape));
    let img = tape.leaf(image.data.clone());
    let out = detector.forward(&mut tape, &vars, img)?;
    let (sec, pri) = labeled_loss_terms(&mut tape, &out.coords, truth)?;
    let loss = tape.add(sec, pri)?;
    let grads = tape.backward(loss)?;
    let mut acc = GradMap::new();
    ParamSet::accumulate_grads(&tape, &grads, &vars, &mut acc);
    Ok((acc, tape.value(sec).item(), tape.value(pri).item()))
}

/// One view pair's gradients under the mode's unlabeled objective.
/// `None` when the pair was skipped as degenerate.
#[allow(clippy::too_many_arguments)]
fn pair_item(
    mode: TrainMode,
    detector: &Detector,
    predictor: &Predictor,
    image_i: &Image,
    image_j: &Image,
    cam_i: &CameraParams,
    cam_j: &CameraParams,
    frame_triple: [usize; 3],
    weights: &LossWeights,
    stop_gradient: bool,
) -> Result<Option<(GradMap, UnlabeledTerms)>> {
    let mut tape = Tape::new();
    let mut vars = detector.params.register(&mut tape);
    vars.extend(predictor.params.register(&mut tape));
    let iv = tape.leaf(image_i.data.clone());
    let jv = tape.leaf(image_j.data.clone());
    let out_i = detector.forward(&mut tape, &vars, iv)?;
    let out_j = detector.forward(&mut tape, &vars, jv)?;
    let s = detector.config.num_secondary;
    let (sec_i, pri_i) = split_coords(&out_i, s);
    let (sec_j, pri_j) = split_coords(&out_j, s);

    let built = match mode {
        TrainMode::Supervised => return Ok(None),
        TrainMode::TriangulationBaseline => {
            triangulation_baseline_loss(&mut tape, &sec_i, &sec_j, cam_i, cam_j)?.map(|(total, v)| {
                (total, UnlabeledTerms { reprojection_i: v, ..Default::default() })
            })
        }
        TrainMode::Geometric | TrainMode::Full => {
            let eff_weights = if mode == TrainMode::Geometric {
                LossWeights { reprojection: weights.reprojection, self_correlation: 0.0, cross_correlation: 0.0 }
            } else {
                *weights
            };
            match predict_world_secondary(
                &mut tape,
                &pri_i,
                &pri_j,
                cam_i,
                cam_j,
                predictor,
                &vars,
                frame_triple,
                stop_gradient,
            )? {
                None => None,
                Some(xs) => {
                    let view_i = ViewInputs {
                        cam: cam_i,
                        secondary_coords: &sec_i,
                        features: out_i.features,
                        det_config: &detector.config,
                    };
                    let view_j = ViewInputs {
                        cam: cam_j,
                        secondary_coords: &sec_j,
                        features: out_j.features,
                        det_config: &detector.config,
                    };
                    unlabeled_loss(&mut tape, &view_i, &view_j, &xs, &eff_weights)?
                }
            }
        }
    };
    let Some((total, terms)) = built else { return Ok(None) };
    let grads = tape.backward(total)?;
    let mut acc = GradMap::new();
    ParamSet::accumulate_grads(&tape, &grads, &vars, &mut acc);
    Ok(Some((acc, terms)))
}

/// Pretrain the predictor by regression on canonical poses triangulated
/// from labeled 2-D truth.
fn pretrain_predictor(
    config: &TrainConfig,
    dataset: &Dataset,
    pools: &Pools,
    predictor: &mut Predictor,
) -> Result<()> {
    if pools.full_frames.is_empty() || config.predictor_steps == 0 {
        return Ok(());
    }
    // precompute canonical (primary, secondary) pairs per frame and view pair
    let frame_triple = dataset.skeleton.frame_triple;
    let mut samples: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for &fi in &pools.full_frames {
        let frame = &dataset.frames[fi];
        let labeled_views: Vec<usize> = frame
            .views
            .iter()
            .enumerate()
            .filter(|(_, v)| v.primary2d.is_some() && v.secondary2d.is_some())
            .map(|(i, _)| i)
            .collect();
        'pairs: for a in 0..labeled_views.len() {
            for b in (a + 1)..labeled_views.len() {
                let (va, vb) = (&frame.views[labeled_views[a]], &frame.views[labeled_views[b]]);
                let cam_a = &dataset.cameras[va.camera];
                let cam_b = &dataset.cameras[vb.camera];
                let tri = |pa: &Vector2<f64>, pb: &Vector2<f64>| -> Option<Vector3<f64>> {
                    match triangulate_dlt(pa, pb, cam_a, cam_b) {
                        Ok(t) if !t.low_confidence => Some(t.point),
                        _ => None,
                    }
                };
                let mut primary = Vec::new();
                for (pa, pb) in va
                    .primary2d
                    .as_ref()
                    .unwrap()
                    .coords
                    .iter()
                    .zip(&vb.primary2d.as_ref().unwrap().coords)
                {
                    match tri(pa, pb) {
                        Some(p) => primary.push(p),
                        None => continue 'pairs,
                    }
                }
                let mut secondary = Vec::new();
                for (pa, pb) in va
                    .secondary2d
                    .as_ref()
                    .unwrap()
                    .coords
                    .iter()
                    .zip(&vb.secondary2d.as_ref().unwrap().coords)
                {
                    match tri(pa, pb) {
                        Some(p) => secondary.push(p),
                        None => continue 'pairs,
                    }
                }
                let pose = Pose3D { primary, secondary, units: CoordUnits::World };
                let Ok((canon, _)) = normalize_pose(&pose, frame_triple) else { continue };
                samples.push((
                    canon.primary.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
                    canon.secondary.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
                ));
                // one pair per frame keeps the sample set balanced
                break 'pairs;
            }
        }
    }
    if samples.is_empty() {
        return Err(CoreError::EmptyInput { context: "predictor pretraining samples".into() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xf17);
    let mut adam = Adam::new(config.predictor_lr, 0.7, (config.predictor_steps / 5).max(1));
    for _ in 0..config.predictor_steps {
        let mut tape = Tape::new();
        let vars = predictor.params.register(&mut tape);
        let mut terms = Vec::new();
        for _ in 0..config.batch_size {
            let (input, t) = &samples[rng.random_range(0..samples.len())];
            let iv = tape.leaf(Tensor::from_vec(input.clone()));
            let tv = tape.leaf(Tensor::from_vec(t.clone()));
            let out = predictor.forward(&mut tape, &vars, iv)?;
            let d = tape.sub(out, tv)?;
            let sq = tape.square(d);
            terms.push(tape.sum(sq));
        }
        let all = tape.concat(&terms)?;
        let loss = tape.mean(all);
        if !tape.value(loss).item().is_finite() {
            return Err(CoreError::TrainingAborted { step: adam.steps_taken(), reason: "predictor loss NaN".into() });
        }
        let grads = tape.backward(loss)?;
        let mut acc = GradMap::new();
        ParamSet::accumulate_grads(&tape, &grads, &vars, &mut acc);
        adam.step(&mut predictor.params, &acc)?;
    }
    Ok(())
}

pub fn train(config: &TrainConfig, dataset: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    if config.mode.uses_pairs() && dataset.cameras.len() < 2 {
        return Err(CoreError::Dataset {
            reason: "unlabeled modes need a calibrated multiview rig (>= 2 cameras)".into(),
        });
    }
    let pools = build_pools(dataset, config)?;
    if config.mode.uses_pairs() && pools.pair_frames.is_empty() && config.phase2_steps > 0 {
        return Err(CoreError::Dataset { reason: "no multiview frames for pair sampling".into() });
    }
    let cache = ImageCache::build(dataset, &pools)?;

    let mut detector = Detector::init(config.detector.clone(), config.seed)?;
    let mut predictor = Predictor::init(config.predictor.clone(), config.seed ^ 0x9d);
    pretrain_predictor(config, dataset, &pools, &mut predictor)?;

    let frame_triple = dataset.skeleton.frame_triple;
    let mut adam = Adam::new(config.learning_rate, config.decay_rate, config.decay_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let mut skipped_pairs = 0usize;
    let mut snapshot = (detector.params.clone(), predictor.params.clone());
    let mut aborted = None;
    let mut phase1_snapshot: Option<(ParamSet, ParamSet)> = None;

    'phases: for phase in [1u8, 2u8] {
        if phase == 2 {
            phase1_snapshot = Some((detector.params.clone(), predictor.params.clone()));
        }
        let steps = if phase == 1 { config.phase1_steps } else { config.phase2_steps };
        for step in 0..steps {
            // deterministic batch selection happens before any parallelism
            let labeled_batch: Vec<usize> = (0..config.batch_size)
                .map(|_| rng.random_range(0..pools.labeled.len()))
                .collect();
            let pair_batch: Vec<(usize, usize, usize)> = if phase == 2 && config.mode.uses_pairs() {
                (0..config.batch_size)
                    .map(|_| {
                        let fi = pools.pair_frames[rng.random_range(0..pools.pair_frames.len())];
                        let views: Vec<usize> = dataset.frames[fi]
                            .views
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| v.image_path.is_some())
                            .map(|(i, _)| i)
                            .collect();
                        let a = rng.random_range(0..views.len());
                        let mut b = rng.random_range(0..views.len() - 1);
                        if b >= a {
                            b += 1;
                        }
                        (fi, views[a], views[b])
                    })
                    .collect()
            } else {
                Vec::new()
            };

            let labeled_results: Vec<Result<(GradMap, f64, f64)>> = labeled_batch
                .par_iter()
                .map(|&idx| {
                    let item = &pools.labeled[idx];
                    labeled_item(
                        &detector,
                        &predictor,
                        cache.get(item.frame_idx, item.view_idx),
                        &item.truth,
                    )
                })
                .collect();
            let pair_results: Vec<Result<Option<(GradMap, UnlabeledTerms)>>> = pair_batch
                .par_iter()
                .map(|&(fi, va, vb)| {
                    let frame = &dataset.frames[fi];
                    pair_item(
                        config.mode,
                        &detector,
                        &predictor,
                        cache.get(fi, va),
                        cache.get(fi, vb),
                        &dataset.cameras[frame.views[va].camera],
                        &dataset.cameras[frame.views[vb].camera],
                        frame_triple,
                        &config.weights,
                        config.stop_gradient_primary,
                    )
                })
                .collect();

            // reduction in batch order keeps results thread-count independent
            let mut breakdown = LossBreakdown { lambda_l: config.lambda_l, ..Default::default() };
            let mut labeled_grads = GradMap::new();
            for r in labeled_results {
                let (g, sec, pri) = r?;
                scale_into(&mut labeled_grads, &g, 1.0);
                breakdown.labeled_secondary += sec;
                breakdown.labeled_primary += pri;
            }
            let mut pair_grads = GradMap::new();
            for r in pair_results {
                match r? {
                    Some((g, terms)) => {
                        scale_into(&mut pair_grads, &g, 1.0);
                        breakdown.reprojection_i += terms.reprojection_i;
                        breakdown.reprojection_j += terms.reprojection_j;
                        breakdown.self_correlation += terms.self_correlation;
                        breakdown.cross_correlation += terms.cross_correlation;
                    }
                    None => skipped_pairs += 1,
                }
            }
            let bl = config.batch_size as f64;
            breakdown.labeled_secondary /= bl;
            breakdown.labeled_primary /= bl;
            breakdown.reprojection_i /= bl;
            breakdown.reprojection_j /= bl;
            breakdown.self_correlation /= bl;
            breakdown.cross_correlation /= bl;
            breakdown.total = breakdown.reprojection_i + breakdown.reprojection_j
                - breakdown.self_correlation
                + breakdown.cross_correlation
                + config.lambda_l * (breakdown.labeled_secondary + breakdown.labeled_primary);

            if !breakdown.total.is_finite() {
                detector.params = snapshot.0.clone();
                predictor.params = snapshot.1.clone();
                aborted = Some(format!("non-finite loss at phase {phase} step {step}"));
                break 'phases;
            }

            let mut total_grads = GradMap::new();
            scale_into(&mut total_grads, &pair_grads, 1.0 / bl);
            scale_into(&mut total_grads, &labeled_grads, config.lambda_l / bl);

            let lr = adam.current_lr();
            let mut all_params = detector.params.clone();
            for (path, t) in predictor.params.iter() {
                all_params.insert(path, t.clone());
            }
            adam.step(&mut all_params, &total_grads)?;
            let mut det_params = ParamSet::new();
            let mut pred_params = ParamSet::new();
            for (path, t) in all_params.iter() {
                if path.starts_with("detector/") {
                    det_params.insert(path, t.clone());
                } else {
                    pred_params.insert(path, t.clone());
                }
            }
            detector.params = det_params;
            predictor.params = pred_params;

            log.push(LogRow { phase, step, lr, breakdown });
            if step % 25 == 0 && detector.params.is_finite() && predictor.params.is_finite() {
                snapshot = (detector.params.clone(), predictor.params.clone());
            }
        }
    }

    let (p1_det, p1_pred) = match phase1_snapshot {
        Some((d, p)) => (d, p),
        None => (detector.params.clone(), predictor.params.clone()),
    };
    let outcome = TrainOutcome {
        phase1_detector: Detector { config: detector.config.clone(), params: p1_det },
        phase1_predictor: Predictor { config: predictor.config.clone(), params: p1_pred },
        detector,
        predictor,
        log,
        aborted,
        skipped_pairs,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        outcome.detector.params.to_checkpoint().save(&dir.join("detector.ckpt.json"))?;
        outcome.predictor.params.to_checkpoint().save(&dir.join("predictor.ckpt.json"))?;
        outcome
            .phase1_detector
            .params
            .to_checkpoint()
            .save(&dir.join("detector_phase1.ckpt.json"))?;
        outcome
            .phase1_predictor
            .params
            .to_checkpoint()
            .save(&dir.join("predictor_phase1.ckpt.json"))?;
        write_training_log(&outcome.log, &dir.join("training_log.csv"))?;
    }
    Ok(outcome)
}

pub fn write_training_log(log: &[LogRow], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|r| {
            vec![
                r.phase.to_string(),
                r.step.to_string(),
                format_float(r.lr),
                format_float(r.breakdown.reprojection_i),
                format_float(r.breakdown.reprojection_j),
                format_float(r.breakdown.self_correlation),
                format_float(r.breakdown.cross_correlation),
                format_float(r.breakdown.labeled_secondary),
                format_float(r.breakdown.labeled_primary),
                format_float(r.breakdown.lambda_l),
                format_float(r.breakdown.total),
            ]
        })
        .collect();
    write_csv(
        path,
        &[
            "phase",
            "step",
            "lr",
            "reprojection_i",
            "reprojection_j",
            "self_correlation",
            "cross_correlation",
            "labeled_secondary",
            "labeled_primary",
            "lambda_l",
            "total",
        ],
        &rows,
    )
}

/// Train and evaluate every config of the grid; failures become rows with
/// an error message instead of stopping the sweep.
pub fn run_ablation(
    dataset: &Dataset,
    grid: &[TrainConfig],
    thresholds: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for config in grid {
        let ratio = config.label_ratio.unwrap_or(1.0);
        let label = config.mode.label().to_string();
        match train(config, dataset, None).and_then(|outcome| {
            if let Some(reason) = &outcome.aborted {
                return Err(CoreError::TrainingAborted { step: outcome.log.len(), reason: reason.clone() });
            }
            evaluate_detector(dataset, &outcome.detector, Split::Test, thresholds)
        }) {
            Ok(result) => {
                for (ti, &t) in result.thresholds.iter().enumerate() {
                    for (k, name) in result.landmark_names.iter().enumerate() {
                        rows.push(AblationRow {
                            mode: label.clone(),
                            ratio,
                            landmark: name.clone(),
                            threshold: t,
                            rate: result.rates[ti][k],
                            error: None,
                        });
                    }
                }
            }
            Err(e) => {
                for &t in thresholds {
                    rows.push(AblationRow {
                        mode: label.clone(),
                        ratio,
                        landmark: "all".into(),
                        threshold: t,
                        rate: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&rows)?;
        std::fs::write(dir.join("ablation_rows.json"), json)?;
    }
    Ok(rows)
}
