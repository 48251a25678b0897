//! Linear joint space over concatenated primary+secondary pose vectors.
//!
//! A pose vector stacks the primary block ahead of the secondary block.
//! The basis is fit by PCA; secondary landmarks are reconstructed by
//! fitting the basis coefficients on (a masked subset of) the primary rows
//! only and reading the secondary rows of the expansion. The 2-D/3-D
//! comparison quantifies how much better the canonical 3-D representation
//! predicts the secondary landmarks than a per-view 2-D representation.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{CoreError, Result};
use crate::geometry::{normalize_pose, project, Pose2D, SimilarityTransform};
use crate::synthdata::{Dataset, FrameData, SkeletonSpec, Split};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMode {
    TwoD,
    ThreeD,
}

impl BasisMode {
    pub fn dims(self) -> usize {
        match self {
            BasisMode::TwoD => 2,
            BasisMode::ThreeD => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BasisMode::TwoD => "2d",
            BasisMode::ThreeD => "3d",
        }
    }
}

/// PCA mean and orthonormal basis with the primary/secondary row split.
#[derive(Debug, Clone)]
pub struct PoseBasis {
    pub mean: DVector<f64>,
    pub bases: Vec<DVector<f64>>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub num_primary: usize,
    pub num_secondary: usize,
    pub mode: BasisMode,
    /// True when rank deficiency forced fewer bases than requested.
    pub truncated: bool,
}

impl PoseBasis {
    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    pub fn primary_rows(&self) -> usize {
        self.num_primary * self.mode.dims()
    }

    pub fn vector_len(&self) -> usize {
        (self.num_primary + self.num_secondary) * self.mode.dims()
    }

    /// Smallest basis count explaining at least `threshold` of the variance.
    pub fn count_for_variance(&self, threshold: f64) -> usize {
        if self.total_variance <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (i, v) in self.explained_variance.iter().enumerate() {
            acc += v;
            if acc / self.total_variance >= threshold {
                return i + 1;
            }
        }
        self.bases.len()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.insert("basis/mean", &Tensor::from_vec(self.mean.iter().cloned().collect()));
        for (i, b) in self.bases.iter().enumerate() {
            ckpt.insert(&format!("basis/vec{i:03}"), &Tensor::from_vec(b.iter().cloned().collect()));
        }
        ckpt.insert("basis/explained_variance", &Tensor::from_vec(self.explained_variance.clone()));
        let mode = match self.mode {
            BasisMode::TwoD => 2.0,
            BasisMode::ThreeD => 3.0,
        };
        ckpt.insert(
            "basis/dims",
            &Tensor::from_vec(vec![
                self.num_primary as f64,
                self.num_secondary as f64,
                self.bases.len() as f64,
                mode,
                self.total_variance,
                if self.truncated { 1.0 } else { 0.0 },
            ]),
        );
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let dims = ckpt.get("basis/dims")?;
        let d = dims.values();
        let mode = if d[3] == 2.0 { BasisMode::TwoD } else { BasisMode::ThreeD };
        let count = d[2] as usize;
        let mut bases = Vec::with_capacity(count);
        for i in 0..count {
            let b = ckpt.get(&format!("basis/vec{i:03}"))?;
            bases.push(DVector::from_vec(b.values().to_vec()));
        }
        Ok(Self {
            mean: DVector::from_vec(ckpt.get("basis/mean")?.values().to_vec()),
            bases,
            explained_variance: ckpt.get("basis/explained_variance")?.values().to_vec(),
            total_variance: d[4],
            num_primary: d[0] as usize,
            num_secondary: d[1] as usize,
            mode,
            truncated: d[5] != 0.0,
        })
    }
}

/// Inclusion mask over the primary landmarks for the configuration study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimaryConfig {
    pub name: String,
    pub included: Vec<bool>,
}

impl PrimaryConfig {
    pub fn full(name: &str, num_primary: usize) -> Self {
        Self { name: name.into(), included: vec![true; num_primary] }
    }

    pub fn without(skeleton: &SkeletonSpec, name: &str, excluded: &[&str]) -> Result<Self> {
        let mut included = vec![true; skeleton.num_primary()];
        for ex in excluded {
            let idx = skeleton.primary_index_of(ex).ok_or_else(|| CoreError::InvalidConfig {
                reason: format!("unknown primary landmark {ex:?}"),
            })?;
            included[idx] = false;
        }
        Ok(Self { name: name.into(), included })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.included.iter().filter(|&&b| b).count();
        if n < 3 {
            return Err(CoreError::InvalidConfig {
                reason: format!("primary config {:?} keeps only {n} landmarks; need at least 3", self.name),
            });
        }
        Ok(())
    }
}

/// The seven default primary-landmark configurations of the study.
pub fn default_primary_configs(skeleton: &SkeletonSpec) -> Vec<PrimaryConfig> {
    let p = skeleton.num_primary();
    vec![
        PrimaryConfig::full("full", p),
        PrimaryConfig::without(skeleton, "no_wrists", &["r_hand", "l_hand"]).expect("names"),
        PrimaryConfig::without(skeleton, "no_left_arm", &["l_shoulder", "l_hand"]).expect("names"),
        PrimaryConfig::without(skeleton, "no_right_arm", &["r_shoulder", "r_hand"]).expect("names"),
        PrimaryConfig::without(skeleton, "no_head", &["head", "nose"]).expect("names"),
        PrimaryConfig::without(skeleton, "no_feet", &["r_foot", "l_foot"]).expect("names"),
        PrimaryConfig::without(
            skeleton,
            "torso_only",
            &["nose", "head", "r_hand", "l_hand", "r_foot", "l_foot", "tail_tip"],
        )
        .expect("names"),
    ]
}

/// PCA fit of the joint space. `vectors` are pose vectors in a shared
/// canonical frame; `b` requests the basis count.
pub fn fit_basis(
    vectors: &[DVector<f64>],
    num_primary: usize,
    num_secondary: usize,
    mode: BasisMode,
    b: usize,
) -> Result<PoseBasis> {
    let n = vectors.len();
    if n < b + 1 {
        return Err(CoreError::InsufficientSamples { needed: b + 1, got: n });
    }
    let d = (num_primary + num_secondary) * mode.dims();
    for v in vectors {
        if v.len() != d {
            return Err(CoreError::ShapeMismatch {
                op: "fit_basis".into(),
                lhs: vec![v.len()],
                rhs: vec![d],
            });
        }
    }
    let mut mean = DVector::zeros(d);
    for v in vectors {
        mean += v;
    }
    mean /= n as f64;

    let mut centered = DMatrix::zeros(n, d);
    for (i, v) in vectors.iter().enumerate() {
        for j in 0..d {
            centered[(i, j)] = v[j] - mean[j];
        }
    }
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);

    let svd = centered.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let sigma = svd.singular_values;
    let smax = sigma.max();

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());

    let mut bases = Vec::new();
    let mut explained = Vec::new();
    for &idx in &order {
        if bases.len() == b {
            break;
        }
        if sigma[idx] <= 1e-12 * smax.max(1e-300) {
            break; // rank exhausted
        }
        let mut vec = DVector::from_fn(d, |j, _| vt[(idx, j)]);
        // deterministic sign: largest-magnitude entry positive
        let mut best = 0;
        for j in 1..d {
            if vec[j].abs() > vec[best].abs() {
                best = j;
            }
        }
        if vec[best] < 0.0 {
            vec = -vec;
        }
        bases.push(vec);
        explained.push(sigma[idx] * sigma[idx] / (n as f64 - 1.0));
    }
    let truncated = bases.len() < b;
    Ok(PoseBasis {
        mean,
        bases,
        explained_variance: explained,
        total_variance,
        num_primary,
        num_secondary,
        mode,
        truncated,
    })
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub coefficients: Vec<f64>,
    /// Reconstructed secondary rows, length `dims * S`.
    pub secondary: DVector<f64>,
    /// Squared-norm reconstruction error against the supplied truth.
    pub error: Option<f64>,
    pub used_ridge: bool,
}

/// Coefficient fit on the masked primary rows, then secondary readout.
pub fn reconstruct_secondary(
    basis: &PoseBasis,
    primary: &DVector<f64>,
    config: &PrimaryConfig,
    truth_secondary: Option<&DVector<f64>>,
) -> Result<Reconstruction> {
    config.validate()?;
    if config.included.len() != basis.num_primary {
        return Err(CoreError::LandmarkCountMismatch {
            expected: basis.num_primary,
            got: config.included.len(),
        });
    }
    let dims = basis.mode.dims();
    if primary.len() != basis.primary_rows() {
        return Err(CoreError::ShapeMismatch {
            op: "reconstruct_secondary".into(),
            lhs: vec![primary.len()],
            rhs: vec![basis.primary_rows()],
        });
    }

    let rows: Vec<usize> = config
        .included
        .iter()
        .enumerate()
        .filter(|(_, &inc)| inc)
        .flat_map(|(lm, _)| (0..dims).map(move |d| lm * dims + d))
        .collect();
    let b = basis.num_bases();
    let s_rows = basis.num_secondary * dims;
    let p_rows = basis.primary_rows();

    let (coefficients, used_ridge) = if b == 0 {
        (Vec::new(), false)
    } else {
        let design = DMatrix::from_fn(rows.len(), b, |r, c| basis.bases[c][rows[r]]);
        let rhs = DVector::from_fn(rows.len(), |r, _| primary[rows[r]] - basis.mean[rows[r]]);
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
        if rank < b {
            // ridge fallback for a rank-deficient masked solve
            let ndm = design.transpose() * &design;
            let lambda = 1e-8 * ndm.trace();
            let reg = ndm + DMatrix::identity(b, b) * lambda;
            let atb = design.transpose() * rhs;
            let sol = reg
                .cholesky()
                .map(|ch| ch.solve(&atb))
                .ok_or_else(|| CoreError::NonFinite { context: "ridge solve".into() })?;
            (sol.iter().cloned().collect(), true)
        } else {
            let sol = svd.solve(&rhs, 1e-12).map_err(|e| CoreError::NonFinite {
                context: format!("least-squares solve: {e}"),
            })?;
            (sol.iter().cloned().collect::<Vec<f64>>(), false)
        }
    };

    let mut secondary = DVector::from_fn(s_rows, |r, _| basis.mean[p_rows + r]);
    for (c, &alpha) in coefficients.iter().enumerate() {
        for r in 0..s_rows {
            secondary[r] += basis.bases[c][p_rows + r] * alpha;
        }
    }
    let error = truth_secondary.map(|t| (&secondary - t).norm_squared());
    Ok(Reconstruction { coefficients, secondary, error, used_ridge })
}

/// 2-D similarity `x -> s R x + t`, the in-plane analog of the body frame:
/// spine along +x with unit length.
#[derive(Debug, Clone)]
pub struct Similarity2D {
    pub scale: f64,
    pub rotation: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl Similarity2D {
    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        let r = self.rotation.transpose();
        Self { scale: s, rotation: r, translation: -s * (r * self.translation) }
    }
}

/// Normalize a 2-D pose by the projected spine: base at the origin, spine
/// along +x with unit length.
pub fn normalize_pose_2d(pose: &Pose2D, frame: [usize; 3]) -> Result<(Pose2D, Similarity2D)> {
    let a = pose.primary[frame[0]];
    let b = pose.primary[frame[1]];
    let v = b - a;
    let len = v.norm();
    if len < 1e-9 {
        return Err(CoreError::DegenerateFrame { area: 0.0 });
    }
    let cos = v.x / len;
    let sin = v.y / len;
    // rotate spine onto +x
    let rotation = Matrix2::new(cos, sin, -sin, cos);
    let scale = 1.0 / len;
    let translation = -scale * (rotation * a);
    let t = Similarity2D { scale, rotation, translation };
    let map = |p: &Vector2<f64>| t.apply(p);
    Ok((
        Pose2D {
            primary: pose.primary.iter().map(map).collect(),
            secondary: pose.secondary.iter().map(map).collect(),
            primary_visible: pose.primary_visible.clone(),
            secondary_visible: pose.secondary_visible.clone(),
        },
        t,
    ))
}

pub fn stack_blocks_2d(primary: &[Vector2<f64>], secondary: &[Vector2<f64>]) -> DVector<f64> {
    let mut out = Vec::with_capacity((primary.len() + secondary.len()) * 2);
    for p in primary.iter().chain(secondary) {
        out.push(p.x);
        out.push(p.y);
    }
    DVector::from_vec(out)
}

pub fn stack_blocks_3d(primary: &[nalgebra::Vector3<f64>], secondary: &[nalgebra::Vector3<f64>]) -> DVector<f64> {
    let mut out = Vec::with_capacity((primary.len() + secondary.len()) * 3);
    for p in primary.iter().chain(secondary) {
        out.push(p.x);
        out.push(p.y);
        out.push(p.z);
    }
    DVector::from_vec(out)
}

/// Per-(config, mode, landmark) error statistics of the comparison study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub config: String,
    pub mode: String,
    pub landmark: String,
    /// "canonical" for normalized-frame units, "px" for pixels.
    pub units: String,
    pub mean_error: f64,
    pub median_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config: String,
    pub mean_px_2d: f64,
    pub mean_px_3d: f64,
    /// `mean_px_3d / mean_px_2d`; below 1 when the 3-D space wins.
    pub ratio_3d_over_2d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub summaries: Vec<CompareSummary>,
    pub basis_count: usize,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Frame3D<'a> {
    frame: &'a FrameData,
    vector: DVector<f64>,
    transform: SimilarityTransform,
}

/// Reconstruction-error comparison between the 2-D and 3-D joint spaces
/// over the default (or supplied) primary-landmark configurations.
///
/// The basis is fit on the labeled training frames; errors are evaluated on
/// the test split. Pixel errors of the 3-D mode come from projecting the
/// denormalized reconstruction into every camera, so both modes are
/// measured in the same units.
pub fn compare_2d_3d(
    dataset: &Dataset,
    configs: &[PrimaryConfig],
    b: usize,
) -> Result<CompareReport> {
    if dataset.cameras.len() < 2 {
        return Err(CoreError::Dataset {
            reason: "the 3-D joint space needs at least two cameras (triangulation)".into(),
        });
    }
    let skeleton = &dataset.skeleton;
    let frame_triple = skeleton.frame_triple;
    let (p, s) = (skeleton.num_primary(), skeleton.num_secondary());
    let sec_names = skeleton.secondary_names();

    fn canonical3d<'a>(frames: &[&'a FrameData], frame_triple: [usize; 3]) -> Result<Vec<Frame3D<'a>>> {
        let mut out = Vec::new();
        for f in frames {
            let Some(pose) = f.pose3d() else { continue };
            let (canon, transform) = normalize_pose(&pose, frame_triple)?;
            out.push(Frame3D {
                frame: f,
                vector: stack_blocks_3d(&canon.primary, &canon.secondary),
                transform,
            });
        }
        Ok(out)
    }
    type View2D<'a> = (DVector<f64>, Similarity2D, &'a FrameData, usize);
    fn normalized2d<'a>(frames: &[&'a FrameData], frame_triple: [usize; 3]) -> Result<Vec<View2D<'a>>> {
        let mut out = Vec::new();
        for f in frames {
            for view in &f.views {
                let Some(pose) = view.pose2d() else { continue };
                if !pose.primary_visible.iter().chain(&pose.secondary_visible).all(|&v| v) {
                    continue; // views with off-screen landmarks are skipped
                }
                let (norm, t) = normalize_pose_2d(&pose, frame_triple)?;
                out.push((stack_blocks_2d(&norm.primary, &norm.secondary), t, *f, view.camera));
            }
        }
        Ok(out)
    }

    let fit_frames: Vec<&FrameData> = dataset.frames_in_split(Split::LabeledFull).collect();
    let test_frames: Vec<&FrameData> = dataset.frames_in_split(Split::Test).collect();
    if fit_frames.is_empty() || test_frames.is_empty() {
        return Err(CoreError::EmptyInput { context: "compare_2d_3d needs labeled and test frames".into() });
    }

    let fit3 = canonical3d(&fit_frames, frame_triple)?;
    let test3 = canonical3d(&test_frames, frame_triple)?;
    let fit2 = normalized2d(&fit_frames, frame_triple)?;
    let test2 = normalized2d(&test_frames, frame_triple)?;

    let basis3 = fit_basis(&fit3.iter().map(|f| f.vector.clone()).collect::<Vec<_>>(), p, s, BasisMode::ThreeD, b)?;
    let basis2 = fit_basis(&fit2.iter().map(|(v, _, _, _)| v.clone()).collect::<Vec<_>>(), p, s, BasisMode::TwoD, b)?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for config in configs {
        config.validate()?;
        // 3-D mode: canonical + projected pixel errors
        let mut canon_err: Vec<Vec<f64>> = vec![Vec::new(); s];
        let mut px_err3: Vec<Vec<f64>> = vec![Vec::new(); s];
        for item in &test3 {
            let primary = item.vector.rows(0, 3 * p).into_owned();
            let truth_sec = item.vector.rows(3 * p, 3 * s).into_owned();
            let rec = reconstruct_secondary(&basis3, &primary, config, Some(&truth_sec))?;
            let inv = item.transform.inverse();
            for k in 0..s {
                let delta = rec.secondary.rows(3 * k, 3).into_owned() - truth_sec.rows(3 * k, 3).into_owned();
                canon_err[k].push(delta.norm());
                let world = inv.apply(&nalgebra::Vector3::new(
                    rec.secondary[3 * k],
                    rec.secondary[3 * k + 1],
                    rec.secondary[3 * k + 2],
                ));
                for view in &item.frame.views {
                    let Some(truth2d) = view.secondary2d.as_ref() else { continue };
                    if !truth2d.visible[k] {
                        continue;
                    }
                    let cam = &dataset.cameras[view.camera];
                    if cam.depth(&world) <= 1e-9 {
                        continue;
                    }
                    let uv = project(cam, &world)?;
                    px_err3[k].push((uv - truth2d.coords[k]).norm());
                }
            }
        }
        // 2-D mode: normalized + pixel errors per view
        let mut norm_err: Vec<Vec<f64>> = vec![Vec::new(); s];
        let mut px_err2: Vec<Vec<f64>> = vec![Vec::new(); s];
        for (vector, t, _, _) in &test2 {
            let primary = vector.rows(0, 2 * p).into_owned();
            let truth_sec = vector.rows(2 * p, 2 * s).into_owned();
            let rec = reconstruct_secondary(&basis2, &primary, config, Some(&truth_sec))?;
            let inv = t.inverse();
            for k in 0..s {
                let delta = rec.secondary.rows(2 * k, 2).into_owned() - truth_sec.rows(2 * k, 2).into_owned();
                norm_err[k].push(delta.norm());
                let rec_px = inv.apply(&Vector2::new(rec.secondary[2 * k], rec.secondary[2 * k + 1]));
                let truth_px = inv.apply(&Vector2::new(truth_sec[2 * k], truth_sec[2 * k + 1]));
                px_err2[k].push((rec_px - truth_px).norm());
            }
        }

        let mut push_rows = |mode: &str, units: &str, errs: &mut [Vec<f64>]| {
            for (k, e) in errs.iter_mut().enumerate() {
                let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
                rows.push(CompareRow {
                    config: config.name.clone(),
                    mode: mode.into(),
                    landmark: sec_names[k].clone(),
                    units: units.into(),
                    mean_error: mean,
                    median_error: median(e),
                    samples: e.len(),
                });
            }
        };
        push_rows("3d", "canonical", &mut canon_err);
        push_rows("3d", "px", &mut px_err3);
        push_rows("2d", "canonical", &mut norm_err);
        push_rows("2d", "px", &mut px_err2);

        let flat = |errs: &[Vec<f64>]| -> f64 {
            let all: Vec<f64> = errs.iter().flatten().cloned().collect();
            all.iter().sum::<f64>() / all.len().max(1) as f64
        };
        let mean_px_3d = flat(&px_err3);
        let mean_px_2d = flat(&px_err2);
        summaries.push(CompareSummary {
            config: config.name.clone(),
            mean_px_2d,
            mean_px_3d,
            ratio_3d_over_2d: mean_px_3d / mean_px_2d,
        });
    }
    Ok(CompareReport { rows, summaries, basis_count: b })
}
