#ifndef SCENETAG_H
#define SCENETAG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScenetagMatchTier {
  SCENETAG_MATCH_TIER_EXACT = 0,
  SCENETAG_MATCH_TIER_SYNONYM = 1,
  SCENETAG_MATCH_TIER_SUBSTRING = 2,
  SCENETAG_MATCH_TIER_FALLBACK = 3,
} ScenetagMatchTier;

typedef enum ScenetagStatus {
  SCENETAG_STATUS_OK = 0,
  SCENETAG_STATUS_NULL_ARGUMENT = 1,
  SCENETAG_STATUS_INVALID_UTF8 = 2,
  SCENETAG_STATUS_INVALID_SCHEMA = 3,
  SCENETAG_STATUS_UNKNOWN_CATEGORY = 4,
  // The answer matched no tag and no fallback applied.
  SCENETAG_STATUS_NO_MATCH = 5,
  SCENETAG_STATUS_INVALID_INPUT = 6,
  SCENETAG_STATUS_PANIC = 7,
} ScenetagStatus;

// Opaque handle to a validated category schema.
typedef struct ScenetagSchema ScenetagSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *scenetag_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void scenetag_string_free(char *s);

// The built-in 16-category schema. Never NULL.
struct ScenetagSchema *scenetag_schema_builtin(void);

// Parses and validates a JSON schema document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ScenetagStatus scenetag_schema_from_json(const char *json, struct ScenetagSchema **out);

// # Safety
// `schema` must be NULL or a handle from this library, not yet freed.
void scenetag_schema_free(struct ScenetagSchema *schema);

// Number of categories, or 0 for a NULL handle.
//
// # Safety
// `schema` must be NULL or a live handle.
size_t scenetag_schema_category_count(const struct ScenetagSchema *schema);

// Maps a free-text answer onto one tag of `category`. On success `*out_tag`
// receives a newly allocated string and `*out_tier` the matching tier
// (`out_tier` may be NULL).
//
// # Safety
// String arguments must be NUL-terminated; `out_tag` must be writable.
enum ScenetagStatus scenetag_match_tag(const struct ScenetagSchema *schema,
                                       const char *category,
                                       const char *raw,
                                       bool strict,
                                       char **out_tag,
                                       enum ScenetagMatchTier *out_tier);

// Renders the default prompt for `category` with its tag list rotated left
// by `shift`.
//
// # Safety
// String arguments must be NUL-terminated; `out_text` must be writable.
enum ScenetagStatus scenetag_render_prompt(const struct ScenetagSchema *schema,
                                           const char *category,
                                           size_t shift,
                                           char **out_text);

// Accuracy and full-vocabulary macro-F1 of `n` predictions. A NULL entry in
// `pred` is an unparsed answer and counts as a miss.
//
// # Safety
// `truth` and `pred` must point to `n` entries and `vocabulary` to
// `n_vocabulary` NUL-terminated strings; outputs must be writable.
enum ScenetagStatus scenetag_scores(const char *const *truth,
                                    const char *const *pred,
                                    size_t n,
                                    const char *const *vocabulary,
                                    size_t n_vocabulary,
                                    double *out_accuracy,
                                    double *out_macro_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENETAG_H */
