#ifndef LENBEAM_H
#define LENBEAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

// Result of every fallible call.
typedef enum LenbeamStatus {
  LENBEAM_STATUS_OK = 0,
  LENBEAM_STATUS_NULL_POINTER = 1,
  LENBEAM_STATUS_INVALID_UTF8 = 2,
  LENBEAM_STATUS_IO = 3,
  LENBEAM_STATUS_INVALID_MODEL = 4,
  LENBEAM_STATUS_INVALID_CONFIG = 5,
  // The search ended without any ended hypothesis.
  LENBEAM_STATUS_NO_HYPOTHESIS = 6,
  LENBEAM_STATUS_OUT_OF_RANGE = 7,
  LENBEAM_STATUS_INTERNAL = 8,
} LenbeamStatus;

typedef enum LenbeamMode {
  LENBEAM_MODE_SIMPLE = 0,
  LENBEAM_MODE_HEURISTIC = 1,
  LENBEAM_MODE_PROPOSED = 2,
} LenbeamMode;

typedef enum LenbeamStopReason {
  LENBEAM_STOP_REASON_EARLY_STOP = 0,
  LENBEAM_STOP_REASON_MAX_LENGTH = 1,
  LENBEAM_STOP_REASON_BEAM_EXHAUSTED = 2,
} LenbeamStopReason;

// Opaque model handle.
typedef struct LenbeamModel LenbeamModel;

// Opaque decode result; entries are ordered best first.
typedef struct LenbeamResult LenbeamResult;

// Search settings. Start from [`lenbeam_config_default`].
typedef struct LenbeamConfig {
  enum LenbeamMode mode;
  // 0 means unlimited.
  size_t beam_size;
  // Negative or non-finite disables score-threshold pruning.
  double score_threshold;
  size_t k_best;
  // Heuristic mode only.
  bool length_normalize;
  // Heuristic mode only; 0 disables the EOS threshold.
  double eos_threshold_factor;
  // Heuristic mode only; 0 disables the length reward.
  double length_reward;
  // Weight of the optional language model.
  double lm_scale;
  // The step cap is `ceil(max_steps_factor * input_length)`.
  double max_steps_factor;
} LenbeamConfig;

// Scores of one ended hypothesis; log probabilities.
typedef struct LenbeamEntry {
  // Label count, end label included.
  size_t length;
  double raw_score;
  double p_b;
  double p_not_end;
  double final_score;
} LenbeamEntry;

// Message of the last call on this thread if it failed, otherwise null.
// Valid until the next call into the library from the same thread.
const char *lenbeam_last_error_message(void);

// Library version, static string.
const char *lenbeam_version(void);

// Loads a JSON model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum LenbeamStatus lenbeam_model_load(const char *path, struct LenbeamModel **out);

// Parses a model from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum LenbeamStatus lenbeam_model_from_json(const char *json, struct LenbeamModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void lenbeam_model_free(struct LenbeamModel *model);

// Number of labels, end label included.
//
// # Safety
// `model` must be a live handle or null (which gives 0).
size_t lenbeam_model_vocab_size(const struct LenbeamModel *model);

// Id of the end label.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum LenbeamStatus lenbeam_model_eos(const struct LenbeamModel *model, size_t *out);

// Name of label `id`; the string lives as long as the model.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum LenbeamStatus lenbeam_model_label(const struct LenbeamModel *model,
                                       size_t id,
                                       const char **out);

// Defaults for `mode`: beam 64, no threshold, 1-best, no heuristics, no
// LM, step cap equal to the input length.
struct LenbeamConfig lenbeam_config_default(enum LenbeamMode mode);

// Decodes one utterance. `lm` may be null; it is used with weight
// `config->lm_scale`. On success `*out` owns a result handle with at least
// one entry; a search in which nothing ended gives `NoHypothesis`.
//
// # Safety
// `model` (and `lm` unless null) must be live handles; `config` and `out`
// valid pointers.
enum LenbeamStatus lenbeam_decode(const struct LenbeamModel *model,
                                  const struct LenbeamModel *lm,
                                  const struct LenbeamConfig *config,
                                  size_t input_length,
                                  struct LenbeamResult **out);

// Releases a result. Null is ignored.
//
// # Safety
// `result` must come from [`lenbeam_decode`] and not be used afterwards.
void lenbeam_result_free(struct LenbeamResult *result);

// Number of k-best entries (0 for null).
//
// # Safety
// `result` must be a live handle or null.
size_t lenbeam_result_len(const struct LenbeamResult *result);

// Steps the search ran (0 for null).
//
// # Safety
// `result` must be a live handle or null.
size_t lenbeam_result_steps(const struct LenbeamResult *result);

// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum LenbeamStatus lenbeam_result_stop_reason(const struct LenbeamResult *result,
                                              enum LenbeamStopReason *out);

// Scores of entry `index` (0 is the decision).
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum LenbeamStatus lenbeam_result_entry(const struct LenbeamResult *result,
                                        size_t index,
                                        struct LenbeamEntry *out);

// Copies the label ids of entry `index`, end label included, into
// `labels` (capacity `capacity`). `*written` receives the full length; a
// buffer that is too small gives `OutOfRange` after copying nothing, so
// callers may pass a null buffer with capacity 0 to query the length.
//
// # Safety
// `result` must be a live handle, `written` a valid pointer, and `labels`
// valid for `capacity` writes unless `capacity` is 0.
enum LenbeamStatus lenbeam_result_labels(const struct LenbeamResult *result,
                                         size_t index,
                                         size_t *labels,
                                         size_t capacity,
                                         size_t *written);

// `log(sum(exp(values)))`; fails on an empty input.
//
// # Safety
// `values` must be valid for `len` reads and `out` a valid pointer.
enum LenbeamStatus lenbeam_log_sum_exp(const double *values, size_t len, double *out);

// `score / length`; fails for length 0.
//
// # Safety
// `out` must be a valid pointer.
enum LenbeamStatus lenbeam_length_normalized_score(double score, size_t length, double *out);

#endif  /* LENBEAM_H */
