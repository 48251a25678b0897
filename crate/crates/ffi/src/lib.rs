//! C ABI for the landmarker core library.
//!
//! Conventions:
//! - Every function returns an [`LmkStatus`] (0 = success) unless it is a
//!   pure accessor. On failure call [`lmk_last_error`] for a message.
//! - Opaque handles (`LmkRig`, `LmkBasis`, `LmkDetector`) are created and
//!   freed by this library; never free them with anything else.
//! - Matrices are row-major `double` buffers owned by the caller.
//!
//! The header is generated into `include/landmarker.h` by the build script
//! when `cbindgen` is available, and shipped pre-generated otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use landmarker_core::checkpoint::Checkpoint;
use landmarker_core::detector::{Detector, Image};
use landmarker_core::error::CoreError;
use landmarker_core::geometry::{
    load_rig, normalize_pose, project, triangulate_dlt, CameraParams, CoordUnits, Pose3D,
};
use landmarker_core::optim::ParamSet;
use landmarker_core::subspace::{
    fit_basis, reconstruct_secondary, BasisMode, PoseBasis, PrimaryConfig,
};
use landmarker_core::synthdata::{build_rig, generate_dataset, GenerateConfig};
use landmarker_core::tensor::Tensor;

/// Status codes mirroring the CLI exit codes, plus FFI-specific ones.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmkStatus {
    Ok = 0,
    ConfigError = 2,
    DataError = 3,
    NumericalError = 4,
    NullPointer = 5,
    Utf8Error = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &CoreError) -> LmkStatus {
    match err {
        CoreError::InvalidConfig { .. } | CoreError::SchemaVersion { .. } => LmkStatus::ConfigError,
        CoreError::Dataset { .. }
        | CoreError::Io(_)
        | CoreError::Serde(_)
        | CoreError::EmptyInput { .. }
        | CoreError::InsufficientSamples { .. }
        | CoreError::LandmarkCountMismatch { .. }
        | CoreError::InvalidSkeleton { .. }
        | CoreError::InvalidCamera { .. }
        | CoreError::Checkpoint { .. } => LmkStatus::DataError,
        _ => LmkStatus::NumericalError,
    }
}

fn fail(err: CoreError) -> LmkStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Message of the most recent error on this thread, or null when none.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn lmk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(c) => c.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lmk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, LmkStatus> {
    if ptr.is_null() {
        set_error("null path".into());
        return Err(LmkStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            Err(LmkStatus::Utf8Error)
        }
    }
}

// ---- dataset generation ----

/// Generate a synthetic dataset from a JSON configuration (the same schema
/// as the manifest's `config` block; missing fields take defaults).
///
/// # Safety
/// `config_json` and `out_dir` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lmk_generate_dataset(
    config_json: *const c_char,
    out_dir: *const c_char,
) -> LmkStatus {
    let out = match path_arg(out_dir) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let config = if config_json.is_null() {
        GenerateConfig::default()
    } else {
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("config is not valid UTF-8".into());
                return LmkStatus::Utf8Error;
            }
        };
        match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(format!("config parse error: {e}"));
                return LmkStatus::ConfigError;
            }
        }
    };
    match generate_dataset(&config, &out) {
        Ok(_) => LmkStatus::Ok,
        Err(e) => fail(e),
    }
}

// ---- camera rigs ----

/// Opaque camera rig handle.
pub struct LmkRig {
    cameras: Vec<CameraParams>,
}

/// Load a rig from a `rig.json` file. On success `*out` owns the handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lmk_rig_load(path: *const c_char, out: *mut *mut LmkRig) -> LmkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return LmkStatus::NullPointer;
    }
    let p = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_rig(Path::new(&p)) {
        Ok(cameras) => {
            *out = Box::into_raw(Box::new(LmkRig { cameras }));
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Build a ring rig aimed at the origin.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lmk_rig_build(
    cameras: usize,
    radius: f64,
    height: f64,
    image_size: usize,
    focal: f64,
    out: *mut *mut LmkRig,
) -> LmkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return LmkStatus::NullPointer;
    }
    match build_rig(cameras, radius, height, image_size, focal, None) {
        Ok(cams) => {
            *out = Box::into_raw(Box::new(LmkRig { cameras: cams }));
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `rig` must come from `lmk_rig_load`/`lmk_rig_build` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lmk_rig_free(rig: *mut LmkRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// # Safety
/// `rig` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmk_rig_camera_count(rig: *const LmkRig) -> usize {
    if rig.is_null() {
        return 0;
    }
    (*rig).cameras.len()
}

/// Project a world point into one camera: `xyz[3] -> uv[2]`.
///
/// # Safety
/// `rig` must be live; `xyz` points at 3 doubles, `uv` at 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lmk_project(
    rig: *const LmkRig,
    camera: usize,
    xyz: *const f64,
    uv: *mut f64,
) -> LmkStatus {
    if rig.is_null() || xyz.is_null() || uv.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    let rig = &*rig;
    if camera >= rig.cameras.len() {
        set_error(format!("camera index {camera} out of range"));
        return LmkStatus::ConfigError;
    }
    let x = nalgebra::Vector3::new(*xyz, *xyz.add(1), *xyz.add(2));
    match project(&rig.cameras[camera], &x) {
        Ok(p) => {
            *uv = p.x;
            *uv.add(1) = p.y;
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Two-view DLT triangulation. Writes the world point into `xyz[3]` and the
/// design-matrix condition number into `condition` when non-null.
///
/// # Safety
/// Pointer arguments must reference buffers of the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn lmk_triangulate(
    rig: *const LmkRig,
    camera_i: usize,
    camera_j: usize,
    uv_i: *const f64,
    uv_j: *const f64,
    xyz: *mut f64,
    condition: *mut f64,
) -> LmkStatus {
    if rig.is_null() || uv_i.is_null() || uv_j.is_null() || xyz.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    let rig = &*rig;
    if camera_i >= rig.cameras.len() || camera_j >= rig.cameras.len() {
        set_error("camera index out of range".into());
        return LmkStatus::ConfigError;
    }
    let zi = nalgebra::Vector2::new(*uv_i, *uv_i.add(1));
    let zj = nalgebra::Vector2::new(*uv_j, *uv_j.add(1));
    match triangulate_dlt(&zi, &zj, &rig.cameras[camera_i], &rig.cameras[camera_j]) {
        Ok(t) => {
            for d in 0..3 {
                *xyz.add(d) = t.point[d];
            }
            if !condition.is_null() {
                *condition = t.condition;
            }
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Canonical body-frame normalization of a primary point set.
/// `primary` is `n x 3` row-major; the canonical coordinates are written to
/// `canonical` (same layout) and the world-to-canonical similarity to
/// `transform[13]` as `[s, R row-major 9, t 3]`.
///
/// # Safety
/// Buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn lmk_normalize_pose(
    primary: *const f64,
    count: usize,
    frame_a: usize,
    frame_b: usize,
    frame_c: usize,
    canonical: *mut f64,
    transform: *mut f64,
) -> LmkStatus {
    if primary.is_null() || canonical.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    if frame_a >= count || frame_b >= count || frame_c >= count {
        set_error("frame indices out of range".into());
        return LmkStatus::ConfigError;
    }
    let points: Vec<nalgebra::Vector3<f64>> = (0..count)
        .map(|i| {
            nalgebra::Vector3::new(
                *primary.add(3 * i),
                *primary.add(3 * i + 1),
                *primary.add(3 * i + 2),
            )
        })
        .collect();
    let pose = Pose3D { primary: points, secondary: vec![], units: CoordUnits::World };
    match normalize_pose(&pose, [frame_a, frame_b, frame_c]) {
        Ok((canon, t)) => {
            for (i, p) in canon.primary.iter().enumerate() {
                for d in 0..3 {
                    *canonical.add(3 * i + d) = p[d];
                }
            }
            if !transform.is_null() {
                *transform = t.scale;
                for r in 0..3 {
                    for c in 0..3 {
                        *transform.add(1 + 3 * r + c) = t.rotation[(r, c)];
                    }
                }
                for d in 0..3 {
                    *transform.add(10 + d) = t.translation[d];
                }
            }
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

// ---- pose basis ----

/// Opaque PCA joint-space handle.
pub struct LmkBasis {
    basis: PoseBasis,
}

/// Fit the joint space from `rows x cols` row-major pose vectors. `dims` is
/// 2 or 3; `cols` must equal `dims * (num_primary + num_secondary)`.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_fit(
    data: *const f64,
    rows: usize,
    cols: usize,
    num_primary: usize,
    num_secondary: usize,
    dims: usize,
    num_bases: usize,
    out: *mut *mut LmkBasis,
) -> LmkStatus {
    if data.is_null() || out.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    let mode = match dims {
        2 => BasisMode::TwoD,
        3 => BasisMode::ThreeD,
        _ => {
            set_error(format!("dims must be 2 or 3, got {dims}"));
            return LmkStatus::ConfigError;
        }
    };
    if cols != dims * (num_primary + num_secondary) {
        set_error("cols disagrees with landmark counts".into());
        return LmkStatus::ConfigError;
    }
    let vectors: Vec<nalgebra::DVector<f64>> = (0..rows)
        .map(|r| {
            nalgebra::DVector::from_fn(cols, |c, _| *data.add(r * cols + c))
        })
        .collect();
    match fit_basis(&vectors, num_primary, num_secondary, mode, num_bases) {
        Ok(basis) => {
            *out = Box::into_raw(Box::new(LmkBasis { basis }));
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `basis` must come from `lmk_basis_fit`/`lmk_basis_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_free(basis: *mut LmkBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Number of retained basis vectors.
///
/// # Safety
/// `basis` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_count(basis: *const LmkBasis) -> usize {
    if basis.is_null() {
        return 0;
    }
    (*basis).basis.num_bases()
}

/// Reconstruct the secondary block from (optionally masked) primary
/// coordinates. `primary` holds `dims * num_primary` doubles; `mask` may be
/// null (all landmarks included) or hold `num_primary` bytes (nonzero =
/// included). The output holds `dims * num_secondary` doubles.
///
/// # Safety
/// Buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_reconstruct(
    basis: *const LmkBasis,
    primary: *const f64,
    mask: *const u8,
    secondary_out: *mut f64,
) -> LmkStatus {
    if basis.is_null() || primary.is_null() || secondary_out.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    let b = &(*basis).basis;
    let p_rows = b.primary_rows();
    let primary_vec = nalgebra::DVector::from_fn(p_rows, |r, _| *primary.add(r));
    let included = if mask.is_null() {
        vec![true; b.num_primary]
    } else {
        (0..b.num_primary).map(|i| *mask.add(i) != 0).collect()
    };
    let config = PrimaryConfig { name: "ffi".into(), included };
    match reconstruct_secondary(b, &primary_vec, &config, None) {
        Ok(rec) => {
            for (i, v) in rec.secondary.iter().enumerate() {
                *secondary_out.add(i) = *v;
            }
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Save the basis in the shared checkpoint format.
///
/// # Safety
/// `basis` must be live; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_save(basis: *const LmkBasis, path: *const c_char) -> LmkStatus {
    if basis.is_null() {
        set_error("null basis".into());
        return LmkStatus::NullPointer;
    }
    let p = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match (*basis).basis.to_checkpoint().save(&p) {
        Ok(()) => LmkStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Load a basis from the shared checkpoint format.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lmk_basis_load(path: *const c_char, out: *mut *mut LmkBasis) -> LmkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return LmkStatus::NullPointer;
    }
    let p = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let ckpt = match Checkpoint::load(&p) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match PoseBasis::from_checkpoint(&ckpt) {
        Ok(basis) => {
            *out = Box::into_raw(Box::new(LmkBasis { basis }));
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

// ---- detector inference ----

/// Opaque detector handle for checkpointed models.
pub struct LmkDetector {
    detector: Detector,
}

/// Load a detector checkpoint. The caller supplies the geometry the model
/// was trained with (image size, heatmap size, landmark counts).
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lmk_detector_load(
    path: *const c_char,
    image_size: usize,
    heatmap_size: usize,
    num_primary: usize,
    num_secondary: usize,
    out: *mut *mut LmkDetector,
) -> LmkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return LmkStatus::NullPointer;
    }
    let p = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let ckpt = match Checkpoint::load(&p) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut config = landmarker_core::detector::DetectorConfig {
        image_size: (image_size, image_size),
        heatmap_size: (heatmap_size, heatmap_size),
        num_primary,
        num_secondary,
        ..Default::default()
    };
    let feat = match ckpt.get("detector/feat/weight") {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    config.feature_dim = feat.shape()[0];
    for i in 0..3 {
        match ckpt.get(&format!("detector/stage{i}/weight")) {
            Ok(t) => config.stage_channels[i] = t.shape()[0],
            Err(e) => return fail(e),
        }
    }
    let params = match ParamSet::from_checkpoint(&ckpt) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    *out = Box::into_raw(Box::new(LmkDetector { detector: Detector { config, params } }));
    LmkStatus::Ok
}

/// # Safety
/// `det` must come from `lmk_detector_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn lmk_detector_free(det: *mut LmkDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Run detection on an RGB image (`3 * size * size` doubles, channel-major,
/// values in [0,1]). Writes `num_secondary + num_primary` (x, y) pairs into
/// `coords`, secondary block first.
///
/// # Safety
/// Buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn lmk_detector_detect(
    det: *const LmkDetector,
    image: *const f64,
    coords: *mut f64,
) -> LmkStatus {
    if det.is_null() || image.is_null() || coords.is_null() {
        set_error("null pointer".into());
        return LmkStatus::NullPointer;
    }
    let detector = &(*det).detector;
    let (h, w) = detector.config.image_size;
    let values: Vec<f64> = (0..3 * h * w).map(|i| *image.add(i)).collect();
    let tensor = match Tensor::new(vec![3, h, w], values) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let img = match Image::new(tensor) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    match detector.detect(&img) {
        Ok((_, _, pose)) => {
            let mut idx = 0;
            for p in pose.secondary.iter().chain(pose.primary.iter()) {
                *coords.add(idx) = p.x;
                *coords.add(idx + 1) = p.y;
                idx += 2;
            }
            LmkStatus::Ok
        }
        Err(e) => fail(e),
    }
}
