#ifndef ARTIFACT_REPAIR_H
#define ARTIFACT_REPAIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes returned by every fallible function.
typedef enum ArStatus {
  AR_STATUS_OK = 0,
  AR_STATUS_NULL_ARGUMENT = 1,
  AR_STATUS_INVALID_ARGUMENT = 2,
  AR_STATUS_IO = 3,
  AR_STATUS_CONFIG = 4,
  AR_STATUS_MISSING_FILE = 5,
  AR_STATUS_MALFORMED = 6,
  AR_STATUS_DIMENSION_MISMATCH = 7,
  AR_STATUS_BACKEND = 8,
  AR_STATUS_NOT_FOUND = 9,
  AR_STATUS_INTERNAL = 10,
  AR_STATUS_PANIC = 11,
} ArStatus;

// Task of an instance loaded from a bare directory.
typedef enum ArTask {
  AR_TASK_VTON = 0,
  AR_TASK_POSE_TRANSFER = 1,
} ArTask;

// Opaque pipeline configuration.
typedef struct ArConfig ArConfig;

// Opaque detection result.
typedef struct ArDetection ArDetection;

// Opaque RGB8 image.
typedef struct ArImage ArImage;

// Opaque corpus instance with all of its rasters and sidecars.
typedef struct ArInstance ArInstance;

// Opaque repair result.
typedef struct ArRepair ArRepair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *ar_last_error(void);

// Library version as a static NUL-terminated string.
const char *ar_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void ar_string_free(char *s);

// # Safety
// `out` must be a valid pointer.
enum ArStatus ar_config_default(struct ArConfig **out);

// Parses TOML text; missing keys take their defaults.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum ArStatus ar_config_from_toml(const char *toml, struct ArConfig **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ArStatus ar_config_load(const char *path, struct ArConfig **out);

// Canonical TOML rendering; free with [`ar_string_free`].
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum ArStatus ar_config_to_toml(const struct ArConfig *config, char **out);

// Overrides the inpainting seeds.
//
// # Safety
// `config` must be a live handle; `seeds` must point to `len` values.
enum ArStatus ar_config_set_seeds(struct ArConfig *config, const uint64_t *seeds, uintptr_t len);

// # Safety
// `config` must be NULL or a handle not yet freed.
void ar_config_free(struct ArConfig *config);

// Copies `width * height * 3` bytes of row-major RGB8 data.
//
// # Safety
// `rgb` must point to `len` readable bytes and `out` be a valid pointer.
enum ArStatus ar_image_new(uintptr_t width,
                           uintptr_t height,
                           const uint8_t *rgb,
                           uintptr_t len,
                           struct ArImage **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ArStatus ar_image_load_png(const char *path, struct ArImage **out);

// # Safety
// `image` must be a live handle and `path` a NUL-terminated string.
enum ArStatus ar_image_save_png(const struct ArImage *image, const char *path);

// # Safety
// `image` must be NULL or a live handle.
uintptr_t ar_image_width(const struct ArImage *image);

// # Safety
// `image` must be NULL or a live handle.
uintptr_t ar_image_height(const struct ArImage *image);

// Borrowed pointer to the RGB8 pixels, valid while the handle lives.
//
// # Safety
// `image` must be NULL or a live handle; `len` may be NULL.
const uint8_t *ar_image_data(const struct ArImage *image, uintptr_t *len);

// # Safety
// `image` must be NULL or a handle not yet freed.
void ar_image_free(struct ArImage *image);

// Structural similarity of two equally sized images.
//
// # Safety
// `a` and `b` must be live handles and `out` a valid pointer.
enum ArStatus ar_ssim(const struct ArImage *a, const struct ArImage *b, double *out);

// Loads instance `id` of the corpus at `root`.
//
// # Safety
// `root` and `id` must be NUL-terminated strings and `out` a valid pointer.
enum ArStatus ar_instance_load(const char *root, const char *id, struct ArInstance **out);

// Loads a bare instance directory; ground-truth masks are optional.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum ArStatus ar_instance_load_dir(const char *dir, enum ArTask task, struct ArInstance **out);

// # Safety
// `instance` must be NULL or a handle not yet freed.
void ar_instance_free(struct ArInstance *instance);

// Runs the detector.
//
// # Safety
// Handles must be live and `out` a valid pointer.
enum ArStatus ar_detect(const struct ArConfig *config,
                        const struct ArInstance *instance,
                        struct ArDetection **out);

// # Safety
// `detection` must be NULL or a live handle.
uintptr_t ar_detection_count(const struct ArDetection *detection);

// Class name (`"ColorTexture"`, `"Deformation"`, `"ClothDesign"`) of report
// `index` as a static string, or NULL when out of range.
//
// # Safety
// `detection` must be NULL or a live handle.
const char *ar_detection_class(const struct ArDetection *detection, uintptr_t index);

// Pixel count of the detected mask of report `index`.
//
// # Safety
// `detection` must be NULL or a live handle.
uintptr_t ar_detection_area(const struct ArDetection *detection, uintptr_t index);

// # Safety
// `detection` must be NULL or a handle not yet freed.
void ar_detection_free(struct ArDetection *detection);

// Repairs one instance with the backend named by `backend`
// (`mock:oracle`, `mock:blur` or `http:<url>`). The oracle uses the
// instance target.
//
// # Safety
// Handles must be live, `backend` a NUL-terminated string and `out` a valid
// pointer.
enum ArStatus ar_repair(const struct ArConfig *config,
                        const struct ArInstance *instance,
                        const char *backend,
                        struct ArRepair **out);

// Copy of the repaired image; free with [`ar_image_free`].
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum ArStatus ar_repair_image(const struct ArRepair *result, struct ArImage **out);

// Number of artifact reports behind the repair.
//
// # Safety
// `result` must be NULL or a live handle.
uintptr_t ar_repair_report_count(const struct ArRepair *result);

// Chosen seed, or false when nothing needed repair.
//
// # Safety
// `result` must be NULL or a live handle; `seed` must be a valid pointer.
bool ar_repair_chosen_seed(const struct ArRepair *result, uint64_t *seed);

// Writes all repair artifacts into `dir` (created if needed).
//
// # Safety
// `result` must be a live handle and `dir` a NUL-terminated string.
enum ArStatus ar_repair_write(const struct ArRepair *result, const char *dir);

// # Safety
// `result` must be NULL or a handle not yet freed.
void ar_repair_free(struct ArRepair *result);

// Validates a corpus. `violations` receives the number of problems found;
// `report_json`, when not NULL, receives the full report.
//
// # Safety
// `root` must be a NUL-terminated string; `violations` a valid pointer;
// `report_json` NULL or a valid pointer.
enum ArStatus ar_validate_corpus(const char *root, uintptr_t *violations, char **report_json);

// Evaluates a corpus and writes the report files into `out_dir`.
// `failures` receives the number of instances that could not be evaluated.
//
// # Safety
// Strings must be NUL-terminated, `config` a live handle and `failures` a
// valid pointer.
enum ArStatus ar_eval(const char *root,
                      const struct ArConfig *config,
                      const char *backend,
                      const char *out_dir,
                      uintptr_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARTIFACT_REPAIR_H */
