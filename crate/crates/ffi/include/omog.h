#ifndef OMOG_H
#define OMOG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum OmogStatus {
  OMOG_STATUS_OK = 0,
  OMOG_STATUS_NULL_POINTER = 1,
  OMOG_STATUS_INVALID_ARGUMENT = 2,
  OMOG_STATUS_IO = 3,
  OMOG_STATUS_FORMAT = 4,
  OMOG_STATUS_SHAPE = 5,
  OMOG_STATUS_NOT_FOUND = 6,
  OMOG_STATUS_INCONSISTENT = 7,
  OMOG_STATUS_BUFFER_TOO_SMALL = 8,
  OMOG_STATUS_NUMERIC = 9,
  OMOG_STATUS_PANIC = 10,
} OmogStatus;

// Entry selection rule for fusion.
typedef enum OmogStrategy {
  OMOG_STRATEGY_TOP_K = 0,
  OMOG_STRATEGY_TOP_K_UNIFORM = 1,
  OMOG_STRATEGY_RANDOM_K = 2,
  OMOG_STRATEGY_LEAST_K = 3,
} OmogStrategy;

// A loaded model bank.
typedef struct OmogBank OmogBank;

// A loaded graph dataset.
typedef struct OmogDataset OmogDataset;

// Fusion settings. Obtain defaults from [`omog_fusion_params_default`].
typedef struct OmogFusionParams {
  size_t k;
  enum OmogStrategy strategy;
  double temperature;
  uint64_t seed;
  // Keep a bank entry named like the dataset (excluded when false).
  bool allow_self;
} OmogFusionParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next omog call on the same thread.
const char *omog_last_error(void);

// Library version as a static nul-terminated string.
const char *omog_version(void);

struct OmogFusionParams omog_fusion_params_default(void);

// Loads the dataset directory at `dir`.
//
// # Safety
// `dir` must be a nul-terminated string and `out` a valid pointer.
enum OmogStatus omog_dataset_load(const char *dir, struct OmogDataset **out);

// # Safety
// `ds` must come from [`omog_dataset_load`] and not be used afterwards.
// Null is accepted.
void omog_dataset_free(struct OmogDataset *ds);

// Writes the node count, feature dimension and class count (0 when the
// dataset has no label embeddings).
//
// # Safety
// All pointers must be valid.
enum OmogStatus omog_dataset_shape(const struct OmogDataset *ds,
                                   size_t *n,
                                   size_t *d,
                                   size_t *classes);

// Loads the model bank rooted at `dir`.
//
// # Safety
// `dir` must be a nul-terminated string and `out` a valid pointer.
enum OmogStatus omog_bank_load(const char *dir, struct OmogBank **out);

// # Safety
// `bank` must come from [`omog_bank_load`] and not be used afterwards.
// Null is accepted.
void omog_bank_free(struct OmogBank *bank);

// Number of entries, 0 for a null handle.
//
// # Safety
// `bank` must be null or a live handle.
size_t omog_bank_len(const struct OmogBank *bank);

// Name of entry `index` in bank order, owned by the bank handle.
// Returns null when out of range.
//
// # Safety
// `bank` must be null or a live handle.
const char *omog_bank_entry_name(const struct OmogBank *bank, size_t index);

// Relevance of every bank entry to `ds`, in bank order, computed on up to
// 1024 nodes sampled with `seed`.
//
// # Safety
// Handles must be live; `out` must hold `len` doubles.
enum OmogStatus omog_relevance(const struct OmogBank *bank,
                               const struct OmogDataset *ds,
                               uint64_t seed,
                               double *out,
                               size_t len);

// Zero-shot class prediction for every node of `ds` with the fused bank
// model. `params` may be null for defaults.
//
// # Safety
// Handles must be live; `out` must hold `len >= n` values.
enum OmogStatus omog_infer_nc(const struct OmogBank *bank,
                              const struct OmogDataset *ds,
                              const struct OmogFusionParams *params,
                              uint32_t *out,
                              size_t len);

// Link scores (cosine of fused embeddings) for `count` node pairs given as
// `2 * count` ids `u0 v0 u1 v1 ...`. `params` may be null for defaults.
//
// # Safety
// Handles must be live; `pairs` must hold `2 * count` ids and `out`
// `len >= count` doubles.
enum OmogStatus omog_score_pairs(const struct OmogBank *bank,
                                 const struct OmogDataset *ds,
                                 const struct OmogFusionParams *params,
                                 const size_t *pairs,
                                 size_t count,
                                 double *out,
                                 size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMOG_H */
