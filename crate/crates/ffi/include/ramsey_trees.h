#ifndef RAMSEY_TREES_H
#define RAMSEY_TREES_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes; the nonzero values match the CLI exit codes where they overlap.
 */
typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_VERIFICATION_FAILED = 1,
  RT_STATUS_INVALID_INPUT = 2,
  RT_STATUS_BUDGET_EXCEEDED = 3,
  RT_STATUS_UNDECIDABLE = 4,
  RT_STATUS_NULL_POINTER = 5,
  RT_STATUS_PANIC = 6,
} RtStatus;

/**
 * A level selection owned by the library.
 */
typedef struct RtLevelSelection RtLevelSelection;

/**
 * The message of the last failure on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *rt_last_error(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void rt_string_free(char *s);

/**
 * Parses a level selection from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum RtStatus rt_level_selection_from_json(const char *json, struct RtLevelSelection **out);

/**
 * A seeded uniform level selection of relative density `density` (`"p/q"`),
 * or the pointer construction when `pointer` is nonzero.
 *
 * # Safety
 * `b` must point to `d` branching numbers; `density` must be NUL-terminated
 * (it may be NULL when `pointer` is nonzero); `out` must be writable.
 */
enum RtStatus rt_level_selection_generate(const uint32_t *b,
                                          size_t d,
                                          size_t height,
                                          uint32_t b_w,
                                          const char *density,
                                          int32_t pointer,
                                          uint64_t seed,
                                          struct RtLevelSelection **out);

/**
 * Frees a handle. NULL is ignored.
 *
 * # Safety
 * `h` must come from this library and not be freed twice.
 */
void rt_level_selection_free(struct RtLevelSelection *h);

/**
 * The JSON form of the selection.
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum RtStatus rt_level_selection_to_json(const struct RtLevelSelection *h, char **out);

/**
 * `δ(D)` as `"p/q"`.
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum RtStatus rt_level_selection_density(const struct RtLevelSelection *h, char **out);

/**
 * Whether `(F, w)` is strongly `θ`-correlated. `f_json` holds the node sets
 * `[[[digits],…],…]` of `F`; `w` is a node such as `"01"`.
 *
 * # Safety
 * `h` must be a live handle; the strings must be NUL-terminated; `result`
 * must be writable.
 */
enum RtStatus rt_check_correlated(const struct RtLevelSelection *h,
                                  const char *f_json,
                                  const char *w,
                                  const char *theta,
                                  int32_t *result);

/**
 * The first strongly `θ`-correlated pair as JSON, or the string `null`.
 *
 * # Safety
 * `h` must be a live handle; `theta` must be NUL-terminated; `out` must be
 * writable.
 */
enum RtStatus rt_find_correlated(const struct RtLevelSelection *h,
                                 const char *theta,
                                 uint64_t budget,
                                 char **out);

/**
 * `|Strong_k|` of the full vector tree, as a decimal string.
 *
 * # Safety
 * `b` must point to `d` branching numbers; `out` must be writable.
 */
enum RtStatus rt_count_strong(const uint32_t *b, size_t d, size_t height, size_t k, char **out);

/**
 * Runs one command line (without the program name) and returns its JSON
 * document. `exit_code` receives the code the binary would exit with.
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings; `out` and `exit_code`
 * must be writable.
 */
enum RtStatus rt_run(const char *const *argv, size_t argc, char **out, int32_t *exit_code);

#endif  /* RAMSEY_TREES_H */
