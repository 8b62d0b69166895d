#ifndef VLM_ASSEMBLY_H
#define VLM_ASSEMBLY_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VlmaStatus {
  VLMA_STATUS_OK = 0,
  VLMA_STATUS_NULL_ARGUMENT = 1,
  VLMA_STATUS_INVALID_UTF8 = 2,
  VLMA_STATUS_INVALID_CONFIG = 3,
  VLMA_STATUS_BACKEND = 4,
  VLMA_STATUS_IO = 5,
  VLMA_STATUS_PARSE = 6,
  VLMA_STATUS_SCENARIO = 7,
  VLMA_STATUS_PANIC = 99,
} VlmaStatus;

typedef enum VlmaSkillKind {
  VLMA_SKILL_KIND_PICK = 0,
  VLMA_SKILL_KIND_PLACE = 1,
  VLMA_SKILL_KIND_INSERT = 2,
  VLMA_SKILL_KIND_DONE = 3,
  VLMA_SKILL_KIND_INIT = 4,
} VlmaSkillKind;

/**
 * Result of a batch of trials.
 */
typedef struct VlmaReport VlmaReport;

/**
 * A spawned scene.
 */
typedef struct VlmaWorld VlmaWorld;

/**
 * A parsed decision. `marker` is 0 for skills without an argument.
 */
typedef struct VlmaDecision {
  enum VlmaSkillKind kind;
  uint32_t marker;
} VlmaDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *vlma_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vlma_string_free(char *s);

/**
 * Parses a model reply. `known_markers` may be null when `n_known` is 0.
 *
 * # Safety
 * `text` must be a NUL-terminated string, `known_markers` must point to
 * `n_known` values, and `out` must be writable.
 */
enum VlmaStatus vlma_parse_decision(const char *text,
                                    const uint32_t *known_markers,
                                    size_t n_known,
                                    struct VlmaDecision *out);

/**
 * Formats a success-rate cell such as `3/10 (30%)`.
 *
 * # Safety
 * `out` must be writable; free the result with [`vlma_string_free`].
 */
enum VlmaStatus vlma_format_cell(size_t successes, size_t trials, char **out);

/**
 * Runs the trials described by a JSON run configuration, the same format
 * the command line accepts with `--config`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` writable.
 */
enum VlmaStatus vlma_run_trials(const char *config_json, struct VlmaReport **out);

/**
 * Success counts of a report. Any output pointer may be null.
 *
 * # Safety
 * `report` must be a live handle; non-null outputs must be writable.
 */
enum VlmaStatus vlma_report_counts(const struct VlmaReport *report,
                                   size_t *trials,
                                   size_t *pick_successes,
                                   size_t *insert_successes,
                                   size_t *assembled);

/**
 * Whether any episode of the run ended on a backend failure.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum VlmaStatus vlma_report_had_backend_failure(const struct VlmaReport *report, bool *out);

/**
 * The report rendered as a markdown table.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum VlmaStatus vlma_report_markdown(const struct VlmaReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle from [`vlma_run_trials`], freed once.
 */
void vlma_report_free(struct VlmaReport *report);

/**
 * Spawns a built-in scenario (`sim`, `real1` or `real2`) with a seed.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string and `out` writable.
 */
enum VlmaStatus vlma_world_spawn(const char *scenario, uint64_t seed, struct VlmaWorld **out);

/**
 * Hex digest of the world's canonical serialization.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum VlmaStatus vlma_world_snapshot_hash(const struct VlmaWorld *world, char **out);

/**
 * Number of gear/shaft pairs that can be assembled next.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum VlmaStatus vlma_world_eligible_pairs(const struct VlmaWorld *world, size_t *out);

/**
 * # Safety
 * `world` must be null or a handle from [`vlma_world_spawn`], freed once.
 */
void vlma_world_free(struct VlmaWorld *world);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VLM_ASSEMBLY_H */
