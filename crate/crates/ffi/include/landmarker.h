#ifndef LANDMARKER_H
#define LANDMARKER_H

/* Generated by cbindgen from landmarker-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes, plus FFI-specific ones.
typedef enum LmkStatus {
  LMK_STATUS_OK = 0,
  LMK_STATUS_CONFIG_ERROR = 2,
  LMK_STATUS_DATA_ERROR = 3,
  LMK_STATUS_NUMERICAL_ERROR = 4,
  LMK_STATUS_NULL_POINTER = 5,
  LMK_STATUS_UTF8_ERROR = 6,
} LmkStatus;

// Opaque PCA joint-space handle.
typedef struct LmkBasis LmkBasis;

// Opaque detector handle for checkpointed models.
typedef struct LmkDetector LmkDetector;

// Opaque camera rig handle.
typedef struct LmkRig LmkRig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent error on this thread, or null when none.
// The pointer stays valid until the next failing call on the thread.
const char *lmk_last_error(void);

// Library version as a static string.
const char *lmk_version(void);

// Generate a synthetic dataset from a JSON configuration (the same schema
// as the manifest's `config` block; missing fields take defaults).
//
// # Safety
// `config_json` and `out_dir` must be valid NUL-terminated strings.
enum LmkStatus lmk_generate_dataset(const char *config_json, const char *out_dir);

// Load a rig from a `rig.json` file. On success `*out` owns the handle.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum LmkStatus lmk_rig_load(const char *path, struct LmkRig **out);

// Build a ring rig aimed at the origin.
//
// # Safety
// `out` must be a valid pointer.
enum LmkStatus lmk_rig_build(uintptr_t cameras,
                             double radius,
                             double height,
                             uintptr_t image_size,
                             double focal,
                             struct LmkRig **out);

// # Safety
// `rig` must come from `lmk_rig_load`/`lmk_rig_build` and not be freed twice.
void lmk_rig_free(struct LmkRig *rig);

// # Safety
// `rig` must be a live handle.
uintptr_t lmk_rig_camera_count(const struct LmkRig *rig);

// Project a world point into one camera: `xyz[3] -> uv[2]`.
//
// # Safety
// `rig` must be live; `xyz` points at 3 doubles, `uv` at 2 writable doubles.
enum LmkStatus lmk_project(const struct LmkRig *rig,
                           uintptr_t camera,
                           const double *xyz,
                           double *uv);

// Two-view DLT triangulation. Writes the world point into `xyz[3]` and the
// design-matrix condition number into `condition` when non-null.
//
// # Safety
// Pointer arguments must reference buffers of the documented sizes.
enum LmkStatus lmk_triangulate(const struct LmkRig *rig,
                               uintptr_t camera_i,
                               uintptr_t camera_j,
                               const double *uv_i,
                               const double *uv_j,
                               double *xyz,
                               double *condition);

// Canonical body-frame normalization of a primary point set.
// `primary` is `n x 3` row-major; the canonical coordinates are written to
// `canonical` (same layout) and the world-to-canonical similarity to
// `transform[13]` as `[s, R row-major 9, t 3]`.
//
// # Safety
// Buffers must match the documented sizes.
enum LmkStatus lmk_normalize_pose(const double *primary,
                                  uintptr_t count,
                                  uintptr_t frame_a,
                                  uintptr_t frame_b,
                                  uintptr_t frame_c,
                                  double *canonical,
                                  double *transform);

// Fit the joint space from `rows x cols` row-major pose vectors. `dims` is
// 2 or 3; `cols` must equal `dims * (num_primary + num_secondary)`.
//
// # Safety
// `data` must hold `rows * cols` doubles; `out` must be valid.
enum LmkStatus lmk_basis_fit(const double *data,
                             uintptr_t rows,
                             uintptr_t cols,
                             uintptr_t num_primary,
                             uintptr_t num_secondary,
                             uintptr_t dims,
                             uintptr_t num_bases,
                             struct LmkBasis **out);

// # Safety
// `basis` must come from `lmk_basis_fit`/`lmk_basis_load`, freed once.
void lmk_basis_free(struct LmkBasis *basis);

// Number of retained basis vectors.
//
// # Safety
// `basis` must be a live handle.
uintptr_t lmk_basis_count(const struct LmkBasis *basis);

// Reconstruct the secondary block from (optionally masked) primary
// coordinates. `primary` holds `dims * num_primary` doubles; `mask` may be
// null (all landmarks included) or hold `num_primary` bytes (nonzero =
// included). The output holds `dims * num_secondary` doubles.
//
// # Safety
// Buffers must match the documented sizes.
enum LmkStatus lmk_basis_reconstruct(const struct LmkBasis *basis,
                                     const double *primary,
                                     const uint8_t *mask,
                                     double *secondary_out);

// Save the basis in the shared checkpoint format.
//
// # Safety
// `basis` must be live; `path` a valid NUL-terminated string.
enum LmkStatus lmk_basis_save(const struct LmkBasis *basis, const char *path);

// Load a basis from the shared checkpoint format.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` a valid pointer.
enum LmkStatus lmk_basis_load(const char *path, struct LmkBasis **out);

// Load a detector checkpoint. The caller supplies the geometry the model
// was trained with (image size, heatmap size, landmark counts).
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` a valid pointer.
enum LmkStatus lmk_detector_load(const char *path,
                                 uintptr_t image_size,
                                 uintptr_t heatmap_size,
                                 uintptr_t num_primary,
                                 uintptr_t num_secondary,
                                 struct LmkDetector **out);

// # Safety
// `det` must come from `lmk_detector_load`, freed once.
void lmk_detector_free(struct LmkDetector *det);

// Run detection on an RGB image (`3 * size * size` doubles, channel-major,
// values in [0,1]). Writes `num_secondary + num_primary` (x, y) pairs into
// `coords`, secondary block first.
//
// # Safety
// Buffers must match the documented sizes.
enum LmkStatus lmk_detector_detect(const struct LmkDetector *det,
                                   const double *image,
                                   double *coords);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANDMARKER_H */
