#ifndef FIBERGCN_H
#define FIBERGCN_H

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum FgStatus {
  FG_STATUS_OK = 0,
  FG_STATUS_NULL_POINTER = 1,
  FG_STATUS_INVALID_ARGUMENT = 2,
  FG_STATUS_IO = 3,
  FG_STATUS_PARSE = 4,
  // Model file version or consistency error.
  FG_STATUS_MODEL = 5,
  // Output buffer too small; the required size was still reported.
  FG_STATUS_BUFFER_TOO_SMALL = 6,
  // Any other library error.
  FG_STATUS_FAILED = 7,
  FG_STATUS_PANIC = 8,
} FgStatus;

// Opaque trained bundle detector.
typedef struct FgModel FgModel;

// Opaque set of labeled streamlines.
typedef struct FgStreamlineSet FgStreamlineSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fg_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `cap`) and returns the full message length without the NUL.
// Returns 0 when the previous call succeeded.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t fg_last_error_message(char *buf, size_t cap);

// Reads an SLT file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FgStatus fg_streamline_set_read(const char *path, struct FgStreamlineSet **out);

// Writes a set as an SLT file (atomically).
//
// # Safety
// `set` must be a live handle and `path` a NUL-terminated string.
enum FgStatus fg_streamline_set_write(const struct FgStreamlineSet *set, const char *path);

// Generates a labeled synthetic set from a spec file.
//
// # Safety
// `spec_path` must be a NUL-terminated string; `out` must be writable.
enum FgStatus fg_generate_synthetic(const char *spec_path,
                                    uint64_t seed,
                                    struct FgStreamlineSet **out);

// Releases a set; null is ignored.
//
// # Safety
// `set` must be null or a handle not yet freed.
void fg_streamline_set_free(struct FgStreamlineSet *set);

// Number of streamlines in the set.
//
// # Safety
// `set` must be a live handle; `out` must be writable.
enum FgStatus fg_streamline_set_len(const struct FgStreamlineSet *set, size_t *out);

// Copies streamline ids into `ids`; `*written` receives the set size.
//
// # Safety
// `ids` must point to `cap` writable `u64`s (or be null with `cap` 0).
enum FgStatus fg_streamline_set_ids(const struct FgStreamlineSet *set,
                                    uint64_t *ids,
                                    size_t cap,
                                    size_t *written);

// Reads a `GCM 1` model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FgStatus fg_model_read(const char *path, struct FgModel **out);

// Writes a model file (atomically).
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum FgStatus fg_model_write(const struct FgModel *model, const char *path);

// Releases a model; null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void fg_model_free(struct FgModel *model);

// Copies the model's bundle name (NUL-terminated) into `buf`; `*needed`
// receives the buffer size required including the NUL.
//
// # Safety
// `buf` must point to `cap` writable bytes (or be null with `cap` 0).
enum FgStatus fg_model_bundle(const struct FgModel *model, char *buf, size_t cap, size_t *needed);

// Classifies every streamline of `set`.
//
// Results for the `*written` classified streamlines go to `ids`,
// `probabilities` and `labels` (each with room for `cap` entries; a buffer
// of the set's length always suffices). Zero-length streamlines are skipped
// and counted in `*skipped`.
//
// # Safety
// Output arrays must each point to `cap` writable elements; `written` and
// `skipped` must be writable.
enum FgStatus fg_predict(const struct FgModel *model,
                         const struct FgStreamlineSet *set,
                         double threshold,
                         uint64_t *ids,
                         double *probabilities,
                         uint8_t *labels,
                         size_t cap,
                         size_t *written,
                         size_t *skipped);

// Precision and recall from confusion counts; an undefined ratio is NaN.
//
// # Safety
// `precision` and `recall` must be writable.
enum FgStatus fg_precision_recall(uint64_t true_positives,
                                  uint64_t false_positives,
                                  uint64_t false_negatives,
                                  double *precision,
                                  double *recall);

// Dice overlap of the visitation maps of two streamline sets.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum FgStatus fg_dice(const struct FgStreamlineSet *a,
                      const struct FgStreamlineSet *b,
                      double voxel_size,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERGCN_H */
