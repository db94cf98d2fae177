#ifndef ARMADA_H
#define ARMADA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ArmadaStatus {
  ARMADA_STATUS_OK = 0,
  ARMADA_STATUS_NULL_POINTER = 1,
  ARMADA_STATUS_INVALID_ARGUMENT = 2,
  ARMADA_STATUS_DATA_ERROR = 3,
  ARMADA_STATUS_COMPUTATION_ERROR = 4,
  ARMADA_STATUS_BUFFER_TOO_SMALL = 5,
  ARMADA_STATUS_PANIC = 6,
} ArmadaStatus;

typedef enum ArmadaResponseKind {
  ARMADA_RESPONSE_KIND_BINARY = 0,
  ARMADA_RESPONSE_KIND_CONTINUOUS = 1,
} ArmadaResponseKind;

// Pipeline configuration.
typedef struct ArmadaConfig ArmadaConfig;

// Loaded dataset.
typedef struct ArmadaDataset ArmadaDataset;

// Scores of one pipeline run.
typedef struct ArmadaScores ArmadaScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *armada_last_error(void);

// Library version as a static NUL-terminated string.
const char *armada_version(void);

// Builds a dataset from a row-major `n × p` matrix and `n` responses.
// Covariates are named `X1..Xp`.
//
// # Safety
// `values` must point to `n * p` doubles, `response` to `n` doubles and
// `out` to writable storage for one pointer.
enum ArmadaStatus armada_dataset_new(const double *values,
                                     uintptr_t n,
                                     uintptr_t p,
                                     const double *response,
                                     enum ArmadaResponseKind kind,
                                     struct ArmadaDataset **out);

// Loads a CSV/TSV file whose first column holds sample ids.
//
// # Safety
// `path` and `response_column` must be NUL-terminated strings; `out` must
// be writable.
enum ArmadaStatus armada_dataset_from_csv(const char *path,
                                          const char *response_column,
                                          enum ArmadaResponseKind kind,
                                          struct ArmadaDataset **out);

// # Safety
// `d` must be a live dataset handle; `n` and `p` writable or null.
enum ArmadaStatus armada_dataset_dims(const struct ArmadaDataset *d, uintptr_t *n, uintptr_t *p);

// # Safety
// `d` must come from this library and not be used afterwards. Null is a no-op.
void armada_dataset_free(struct ArmadaDataset *d);

// Default configuration with the given seed and cluster count (0 chooses
// the count by bootstrap stability).
//
// # Safety
// `out` must be writable.
enum ArmadaStatus armada_config_new(uint64_t seed, uintptr_t clusters, struct ArmadaConfig **out);

// Parses a JSON configuration (same schema as the command line's `--config`).
//
// # Safety
// `json` must be a NUL-terminated string; `out` writable.
enum ArmadaStatus armada_config_from_json(const char *json, struct ArmadaConfig **out);

// # Safety
// `c` must come from this library and not be used afterwards. Null is a no-op.
void armada_config_free(struct ArmadaConfig *c);

// Runs the full pipeline. A null `config` uses the defaults.
//
// # Safety
// `d` must be a live dataset, `config` a live config or null, `out` writable.
enum ArmadaStatus armada_select(const struct ArmadaDataset *d,
                                const struct ArmadaConfig *config,
                                struct ArmadaScores **out);

// Number of covariates scored.
//
// # Safety
// `s` must be a live scores handle or null (returns 0).
uintptr_t armada_scores_len(const struct ArmadaScores *s);

// Number of methods in the bank, the maximum possible score.
//
// # Safety
// `s` must be a live scores handle or null (returns 0).
uintptr_t armada_scores_methods(const struct ArmadaScores *s);

// Copies the per-covariate scores into `buf` (capacity `cap`).
//
// # Safety
// `s` must be a live scores handle; `buf` must hold `cap` values.
enum ArmadaStatus armada_scores_get(const struct ArmadaScores *s, uint32_t *buf, uintptr_t cap);

// Writes the 0-based covariate indices in rank order (score descending,
// then raw p-value ascending, then index).
//
// # Safety
// `s` must be a live scores handle; `buf` must hold `cap` values.
enum ArmadaStatus armada_scores_rank(const struct ArmadaScores *s, uintptr_t *buf, uintptr_t cap);

// Writes the 0-based indices with score at least `threshold` into `buf`
// and their number into `count`. With a null `buf` only `count` is set.
//
// # Safety
// `s` must be a live scores handle; `count` writable; `buf` null or
// holding `cap` values.
enum ArmadaStatus armada_scores_select(const struct ArmadaScores *s,
                                       uintptr_t threshold,
                                       uintptr_t *buf,
                                       uintptr_t cap,
                                       uintptr_t *count);

// Score table as TSV. Release with [`armada_string_free`].
//
// # Safety
// `s` must be a live scores handle or null (returns null).
char *armada_scores_to_tsv(const struct ArmadaScores *s);

// # Safety
// `s` must come from this library and not be used afterwards. Null is a no-op.
void armada_scores_free(struct ArmadaScores *s);

// # Safety
// `s` must be a string returned by this library. Null is a no-op.
void armada_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARMADA_H */
