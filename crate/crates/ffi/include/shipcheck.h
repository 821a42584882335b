#ifndef SHIPCHECK_H
#define SHIPCHECK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShipStatus {
  SHIP_STATUS_OK = 0,
  SHIP_STATUS_NULL_ARGUMENT = 1,
  SHIP_STATUS_INVALID_UTF8 = 2,
  SHIP_STATUS_COMPILE_ERROR = 3,
  SHIP_STATUS_UNKNOWN_ENTRY = 4,
  SHIP_STATUS_INVALID_PACK = 5,
  SHIP_STATUS_INTERNAL = 6,
} ShipStatus;

/**
 * A validated content pack.
 */
typedef struct ShipPack ShipPack;

/**
 * A parsed and checked source unit.
 */
typedef struct ShipProgram ShipProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *ship_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void ship_string_free(char *s);

/**
 * Parses and checks a unit. `is_tests` selects a test file over a
 * component.
 *
 * # Safety
 * `name` and `source` must be NUL-terminated; `out` must be writable.
 */
enum ShipStatus ship_parse(const char *name,
                           const char *source,
                           bool is_tests,
                           struct ShipProgram **out);

/**
 * # Safety
 * `program` must be null or a handle from [`ship_parse`] not yet freed.
 */
void ship_program_free(struct ShipProgram *program);

/**
 * Writes the sorted executable line numbers as a JSON array.
 *
 * # Safety
 * `program` must be a live handle; `out` must be writable.
 */
enum ShipStatus ship_program_executable_lines(const struct ShipProgram *program, char **out);

/**
 * Calls a parameterless function of a component and writes the outcome
 * as JSON. Zero limits mean the defaults.
 *
 * # Safety
 * `program` must be a live handle, `entry` NUL-terminated and `out`
 * writable.
 */
enum ShipStatus ship_program_run(const struct ShipProgram *program,
                                 const char *entry,
                                 uint64_t wall_timeout_ms,
                                 uint64_t max_steps,
                                 char **out);

/**
 * Runs a test file against a component and writes the suite result,
 * with coverage, as JSON. `component_name` must match the name declared
 * in the component source. Zero limits mean the defaults.
 *
 * # Safety
 * All strings must be NUL-terminated; `out` must be writable.
 */
enum ShipStatus ship_run_suite(const char *component_name,
                               const char *component_source,
                               const char *tests_source,
                               uint64_t wall_timeout_ms,
                               uint64_t max_steps,
                               char **out);

/**
 * Loads and validates a content pack directory, or the built-in pack
 * when `dir` is null.
 *
 * # Safety
 * `dir` must be null or NUL-terminated; `out` must be writable.
 */
enum ShipStatus ship_pack_load(const char *dir, struct ShipPack **out);

/**
 * Number of rooms in a pack, or 0 for null.
 *
 * # Safety
 * `pack` must be null or a live handle.
 */
uint32_t ship_pack_room_count(const struct ShipPack *pack);

/**
 * Writes the room table of a pack as JSON.
 *
 * # Safety
 * `pack` must be a live handle; `out` must be writable.
 */
enum ShipStatus ship_pack_rooms(const struct ShipPack *pack, char **out);

/**
 * # Safety
 * `pack` must be null or a handle from [`ship_pack_load`] not yet freed.
 */
void ship_pack_free(struct ShipPack *pack);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHIPCHECK_H */
