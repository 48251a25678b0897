//! Camera model, projection, two-view DLT triangulation, and body-frame
//! pose normalization.
//!
//! All cameras are calibrated pinholes: a point `X` in world coordinates
//! projects to `K (R X + t)` in homogeneous pixels. Triangulation solves
//! the inhomogeneous DLT normal equations, which is the same formulation
//! the tape-based differentiable path uses, so the two agree to rounding.

pub mod diff;

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Ray-parallelism guard: DLT design matrices with a condition number above
/// this are flagged low-confidence and skipped by the trainer.
pub const CONDITION_LIMIT: f64 = 1e8;

const MIN_DEPTH: f64 = 1e-9;
const MIN_BASELINE: f64 = 1e-9;
const MIN_FRAME_AREA: f64 = 1e-9;

/// Calibrated pinhole camera: intrinsics `K`, world-to-camera rotation `R`,
/// translation `t`, and sensor size in pixels.
#[derive(Debug, Clone)]
pub struct CameraParams {
    pub name: String,
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        let rtr = self.r.transpose() * self.r;
        let dev = (rtr - Matrix3::identity()).norm();
        if dev > 1e-9 {
            return Err(CoreError::InvalidCamera {
                reason: format!("rotation not orthonormal (deviation {dev:e})"),
            });
        }
        let det = self.r.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidCamera { reason: format!("det(R) = {det}, expected +1") });
        }
        if self.k[(1, 0)].abs() > 1e-12 || self.k[(2, 0)].abs() > 1e-12 || self.k[(2, 1)].abs() > 1e-12 {
            return Err(CoreError::InvalidCamera { reason: "K is not upper-triangular".into() });
        }
        if self.k[(0, 0)] <= 0.0 || self.k[(1, 1)] <= 0.0 {
            return Err(CoreError::InvalidCamera { reason: "focal entries must be positive".into() });
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.r.transpose() * self.t
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, x: &Vector3<f64>) -> f64 {
        (self.r * x + self.t).z
    }

    /// Rows of the 3x4 projection matrix `K [R | t]`.
    pub fn projection_rows(&self) -> [[f64; 4]; 3] {
        let m = self.k * self.r;
        let kt = self.k * self.t;
        let mut rows = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = m[(i, j)];
            }
            rows[i][3] = kt[i];
        }
        rows
    }
}

/// Project a world point into pixel coordinates.
pub fn project(cam: &CameraParams, x: &Vector3<f64>) -> Result<Vector2<f64>> {
    let xc = cam.r * x + cam.t;
    if xc.z.abs() <= MIN_DEPTH {
        return Err(CoreError::DegenerateProjection { depth: xc.z });
    }
    let uvw = cam.k * xc;
    Ok(Vector2::new(uvw.x / uvw.z, uvw.y / uvw.z))
}

/// Coordinate system a 3-D pose is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordUnits {
    World,
    Canonical,
}

/// 3-D landmark set split into the primary and secondary blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pose3D {
    pub primary: Vec<Vector3<f64>>,
    pub secondary: Vec<Vector3<f64>>,
    pub units: CoordUnits,
}

impl Pose3D {
    pub fn is_finite(&self) -> bool {
        self.primary.iter().chain(&self.secondary).all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// 2-D landmark set in pixels, with per-landmark visibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pose2D {
    pub primary: Vec<Vector2<f64>>,
    pub secondary: Vec<Vector2<f64>>,
    pub primary_visible: Vec<bool>,
    pub secondary_visible: Vec<bool>,
}

impl Pose2D {
    pub fn all_visible(primary: Vec<Vector2<f64>>, secondary: Vec<Vector2<f64>>) -> Self {
        let pv = vec![true; primary.len()];
        let sv = vec![true; secondary.len()];
        Self { primary, secondary, primary_visible: pv, secondary_visible: sv }
    }
}

/// Similarity map `x -> s R x + t` with `s > 0` and `R` a proper rotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        let r = self.rotation.transpose();
        Self { scale: s, rotation: r, translation: -s * (r * self.translation) }
    }

    pub fn apply_pose(&self, pose: &Pose3D, units: CoordUnits) -> Pose3D {
        Pose3D {
            primary: pose.primary.iter().map(|p| self.apply(p)).collect(),
            secondary: pose.secondary.iter().map(|p| self.apply(p)).collect(),
            units,
        }
    }
}

/// Two-view triangulation result with its conditioning diagnostics.
#[derive(Debug, Clone)]
pub struct Triangulated {
    pub point: Vector3<f64>,
    /// Condition number of the 4x3 DLT design matrix.
    pub condition: f64,
    /// True when the rays are near-parallel (`condition > CONDITION_LIMIT`).
    pub low_confidence: bool,
}

/// Stacked DLT rows for one observation: `u * m3 - m1` and `v * m3 - m2`.
fn dlt_rows(cam: &CameraParams, z: &Vector2<f64>, a: &mut Vec<[f64; 3]>, b: &mut Vec<f64>) {
    let m = cam.projection_rows();
    for (coord, row) in [(z.x, &m[0]), (z.y, &m[1])] {
        a.push([
            coord * m[2][0] - row[0],
            coord * m[2][1] - row[1],
            coord * m[2][2] - row[2],
        ]);
        b.push(row[3] - coord * m[2][3]);
    }
}

/// Direct linear transform from two views, solved through the normal
/// equations so it matches the differentiable tape formulation exactly.
pub fn triangulate_dlt(
    z_i: &Vector2<f64>,
    z_j: &Vector2<f64>,
    cam_i: &CameraParams,
    cam_j: &CameraParams,
) -> Result<Triangulated> {
    if !(z_i.iter().all(|v| v.is_finite()) && z_j.iter().all(|v| v.is_finite())) {
        return Err(CoreError::NonFinite { context: "triangulation observations".into() });
    }
    let baseline = (cam_i.center() - cam_j.center()).norm();
    if baseline < MIN_BASELINE {
        return Err(CoreError::DegeneratePair { baseline });
    }

    let mut a_rows = Vec::with_capacity(4);
    let mut b_vals = Vec::with_capacity(4);
    dlt_rows(cam_i, z_i, &mut a_rows, &mut b_vals);
    dlt_rows(cam_j, z_j, &mut a_rows, &mut b_vals);

    let a = DMatrix::from_fn(4, 3, |r, c| a_rows[r][c]);
    let svals = a.clone().svd(false, false).singular_values;
    let (smax, smin) = (svals.max(), svals.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let at = a.transpose();
    let n = &at * &a;
    let c = &at * DMatrix::from_fn(4, 1, |r, _| b_vals[r]);
    let point = solve3(&n, &c).ok_or(CoreError::DegeneratePair { baseline })?;

    Ok(Triangulated { point, condition, low_confidence: condition > CONDITION_LIMIT })
}

/// Cramer solve of a 3x3 system, mirroring the tape-side arithmetic.
fn solve3(n: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<Vector3<f64>> {
    let det = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let base = [
        [n[(0, 0)], n[(0, 1)], n[(0, 2)]],
        [n[(1, 0)], n[(1, 1)], n[(1, 2)]],
        [n[(2, 0)], n[(2, 1)], n[(2, 2)]],
    ];
    let d = det(base);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = Vector3::zeros();
    for col in 0..3 {
        let mut m = base;
        for row in 0..3 {
            m[row][col] = c[(row, 0)];
        }
        out[col] = det(m) / d;
    }
    Some(out)
}

/// Canonical body frame from a designated landmark triple
/// `(spine base, spine top, shoulder)`, all indices into the primary block.
///
/// The spine limb becomes the +x axis with unit length, the shoulder limb
/// fixes +y by Gram-Schmidt, and +z completes a right-handed frame.
pub fn normalize_pose(pose: &Pose3D, frame: [usize; 3]) -> Result<(Pose3D, SimilarityTransform)> {
    let p = &pose.primary;
    for &idx in &frame {
        if idx >= p.len() {
            return Err(CoreError::InvalidConfig {
                reason: format!("frame landmark index {idx} out of range ({} primaries)", p.len()),
            });
        }
    }
    let (a, b, c) = (p[frame[0]], p[frame[1]], p[frame[2]]);
    let spine = b - a;
    let len = spine.norm();
    if len < MIN_BASELINE {
        return Err(CoreError::DegenerateFrame { area: 0.0 });
    }
    let scale = 1.0 / len;
    let area_scaled = 0.5 * (spine.cross(&(c - a))).norm() * scale * scale;
    if area_scaled <= MIN_FRAME_AREA {
        return Err(CoreError::DegenerateFrame { area: area_scaled });
    }

    let x_axis = spine / len;
    let shoulder = c - b;
    let y_raw = shoulder - x_axis * shoulder.dot(&x_axis);
    let y_axis = y_raw / y_raw.norm();
    let z_axis = x_axis.cross(&y_axis);

    let rotation = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), z_axis.transpose()]);
    let translation = -scale * (rotation * a);
    let transform = SimilarityTransform { scale, rotation, translation };
    let canonical = transform.apply_pose(pose, CoordUnits::Canonical);
    Ok((canonical, transform))
}

/// Least-squares similarity alignment of `src` onto `dst` (the
/// template-alignment alternative to the deterministic limb frame).
pub fn procrustes_align(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(CoreError::LandmarkCountMismatch { expected: dst.len(), got: src.len() });
    }
    if src.len() < 3 {
        return Err(CoreError::InsufficientSamples { needed: 3, got: src.len() });
    }
    let n = src.len() as f64;
    let mu_s: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        cov += cd * cs.transpose();
        var_s += cs.norm_squared();
    }
    if var_s < 1e-18 {
        return Err(CoreError::DegenerateFrame { area: 0.0 });
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s_fix = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s_fix[(2, 2)] = -1.0;
    }
    let rotation = u * s_fix * vt;
    let scale = (svd.singular_values.dot(&Vector3::new(s_fix[(0, 0)], s_fix[(1, 1)], s_fix[(2, 2)]))) / var_s;
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(SimilarityTransform { scale, rotation, translation })
}

/// Rig file records: `{name, K (row-major 9), R (row-major 9), t (3), width, height}`.
#[derive(Debug, Serialize, Deserialize)]
struct RigRecord {
    name: String,
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
    width: usize,
    height: usize,
}

pub fn save_rig(cams: &[CameraParams], path: &std::path::Path) -> Result<()> {
    let records: Vec<RigRecord> = cams
        .iter()
        .map(|c| {
            let mut k = [0.0; 9];
            let mut r = [0.0; 9];
            for row in 0..3 {
                for col in 0..3 {
                    k[row * 3 + col] = c.k[(row, col)];
                    r[row * 3 + col] = c.r[(row, col)];
                }
            }
            RigRecord {
                name: c.name.clone(),
                k,
                r,
                t: [c.t.x, c.t.y, c.t.z],
                width: c.width,
                height: c.height,
            }
        })
        .collect();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

pub fn load_rig(path: &std::path::Path) -> Result<Vec<CameraParams>> {
    let data = std::fs::read_to_string(path)?;
    let records: Vec<RigRecord> = serde_json::from_str(&data)?;
    let cams: Vec<CameraParams> = records
        .into_iter()
        .map(|rec| CameraParams {
            name: rec.name,
            k: Matrix3::from_fn(|r, c| rec.k[r * 3 + c]),
            r: Matrix3::from_fn(|r, c| rec.r[r * 3 + c]),
            t: Vector3::new(rec.t[0], rec.t[1], rec.t[2]),
            width: rec.width,
            height: rec.height,
        })
        .collect();
    for cam in &cams {
        cam.validate()?;
    }
    Ok(cams)
}
