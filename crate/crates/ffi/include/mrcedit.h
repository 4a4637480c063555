#ifndef MRCEDIT_H
#define MRCEDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MrcStatus {
  MRC_STATUS_OK = 0,
  MRC_STATUS_NULL_ARGUMENT = 1,
  MRC_STATUS_INVALID_UTF8 = 2,
  MRC_STATUS_INVALID_JSON = 3,
  MRC_STATUS_INVALID_ARGUMENT = 4,
  MRC_STATUS_PIPELINE = 5,
  MRC_STATUS_PANIC = 6,
} MrcStatus;

/*
 Opaque model backend.
 */
typedef struct MrcBackend MrcBackend;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until the
 next call into the library from the same thread.
 */
const char *mrc_last_error(void);

/*
 Releases a string returned by the library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void mrc_string_free(char *s);

/*
 Scripted backend from a JSON array of rules
 (`[{"match": {"exact"|"regex": ...}, "responses": [{"text", "token_logprobs"}]}]`).

 # Safety
 String arguments must be valid nul-terminated strings; `out` must be writable.
 */
enum MrcStatus mrc_backend_mock_new(const char *id,
                                    const char *rules_json,
                                    uint64_t seed,
                                    struct MrcBackend **out);

/*
 Completion-endpoint backend from a JSON endpoint description
 (`{"base_url", "model_name", ...}`). The API key is read from the
 environment variable named by `api_key_env` at call time.

 # Safety
 String arguments must be valid nul-terminated strings; `out` must be writable.
 */
enum MrcStatus mrc_backend_wire_new(const char *id,
                                    const char *endpoint_json,
                                    struct MrcBackend **out);

/*
 # Safety
 `b` must come from a `mrc_backend_*_new` call and not have been freed. Null is ignored.
 */
void mrc_backend_free(struct MrcBackend *b);

/*
 Token-level F1 of `prediction` against the best of `n_golds` answers.

 # Safety
 `golds` must point to `n_golds` valid strings; `out` must be writable.
 */
enum MrcStatus mrc_f1(const char *prediction,
                      const char *const *golds,
                      size_t n_golds,
                      double *out);

/*
 # Safety
 As for [`mrc_f1`].
 */
enum MrcStatus mrc_exact_match(const char *prediction,
                               const char *const *golds,
                               size_t n_golds,
                               uint8_t *out);

/*
 # Safety
 As for [`mrc_f1`].
 */
enum MrcStatus mrc_inclusion_match(const char *prediction,
                                   const char *const *golds,
                                   size_t n_golds,
                                   uint8_t *out);

/*
 True when the original answer was inclusion-correct and the edited one is not.

 # Safety
 String arrays must hold the stated number of valid strings; `out` must be writable.
 */
enum MrcStatus mrc_is_misled(const char *answer_original,
                             const char *answer_edited,
                             const char *const *golds_original,
                             size_t n_golds_original,
                             const char *const *golds_edited,
                             size_t n_golds_edited,
                             bool *out);

/*
 Answer confidence from per-token log-probabilities (first three count).

 # Safety
 `logprobs` must point to `n` doubles (may be null when `n` is 0); `out` must be writable.
 */
enum MrcStatus mrc_confidence(const double *logprobs, size_t n, double *out);

/*
 Runs the guided editor on one sample (`{"id", "context", "question", "golds"}`).
 `config_json` may be null for defaults. Writes the edit trace as JSON.

 # Safety
 Handles must be live; strings valid; `out_trace_json` writable.
 */
enum MrcStatus mrc_pipeline_run(const struct MrcBackend *editor,
                                const struct MrcBackend *guide,
                                const char *sample_json,
                                const char *config_json,
                                char **out_trace_json);

/*
 Non-targeted edit of one sample. Arguments as for [`mrc_pipeline_run`].

 # Safety
 As for [`mrc_pipeline_run`].
 */
enum MrcStatus mrc_baseline_run(const struct MrcBackend *editor,
                                const char *sample_json,
                                const char *config_json,
                                char **out_trace_json);

/*
 Scores a reader over a JSON array of samples. `edited` only labels the run.
 Writes the run (per-sample scores and aggregate report) as JSON.

 # Safety
 Handle must be live; strings valid; `out_run_json` writable.
 */
enum MrcStatus mrc_evaluate(const struct MrcBackend *reader,
                            const char *dataset_id,
                            const char *samples_json,
                            bool edited,
                            char **out_run_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRCEDIT_H */
