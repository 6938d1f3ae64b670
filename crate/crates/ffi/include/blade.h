#ifndef BLADE_H
#define BLADE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum {
  BLADE_STATUS_OK = 0,
  BLADE_STATUS_NULL_POINTER = 1,
  BLADE_STATUS_INVALID_UTF8 = 2,
  BLADE_STATUS_INVALID_ARGUMENT = 3,
  // Input files are missing or malformed.
  BLADE_STATUS_DATA_ERROR = 4,
  // The session's configuration does not allow the operation.
  BLADE_STATUS_FORBIDDEN = 5,
  BLADE_STATUS_INTERNAL = 6,
  BLADE_STATUS_PANIC = 7,
} BladeStatus;

// A loaded index with the template backend and default policy.
typedef struct BladeEngine BladeEngine;

// One student's dialogue.
typedef struct BladeSession BladeSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after a
// success. The pointer stays valid until the next blade call on the thread.
const char *blade_last_error(void);

// Ingest the course manifest at `manifest_path` and index it.
//
// # Safety
// `manifest_path` must be a NUL-terminated string and `out_engine` a
// writable pointer.
BladeStatus blade_engine_open(const char *manifest_path, BladeEngine **out_engine);

// Load an index file written by `blade index build`.
//
// # Safety
// As for [`blade_engine_open`].
BladeStatus blade_engine_load_index(const char *index_path, BladeEngine **out_engine);

// Replace the ranker weights with those in a weights file.
//
// # Safety
// `engine` must come from an open call and not be in use on another thread.
BladeStatus blade_engine_load_weights(BladeEngine *engine, const char *weights_path);

// Number of instructional units in the engine's index.
//
// # Safety
// `engine` must come from an open call; `out_count` must be writable.
BladeStatus blade_engine_unit_count(const BladeEngine *engine, size_t *out_count);

// Answer one query outside any session. `module` may be null. Writes the
// response as JSON `{text, citations, retrieved, no_results, backend}`.
//
// # Safety
// `engine` must come from an open call; string arguments must be
// NUL-terminated; `out_json` must be writable.
BladeStatus blade_engine_query_json(const BladeEngine *engine,
                                    const char *query,
                                    const char *module,
                                    char **out_json);

// Release an engine. Null is ignored.
//
// # Safety
// `engine` must come from an open call and not be used afterwards.
void blade_engine_free(BladeEngine *engine);

// Start a session for the engine's course. `module` may be null; `config`
// is one of 'A', 'B', 'C'.
//
// # Safety
// `engine` must come from an open call; `module` null or NUL-terminated;
// `out_session` writable.
BladeStatus blade_session_new(const BladeEngine *engine,
                              const char *module,
                              char config,
                              BladeSession **out_session);

// Ask a question within a session and write the assistant turn as JSON.
// Sessions whose configuration has no assistant get
// [`BladeStatus::Forbidden`].
//
// # Safety
// `engine` and `session` must be live handles, the session used by one
// thread at a time; `query` NUL-terminated; `out_json` writable.
BladeStatus blade_session_ask(const BladeEngine *engine,
                              BladeSession *session,
                              const char *query,
                              char **out_json);

// The whole session, turns included, as JSON.
//
// # Safety
// `session` must be a live handle; `out_json` writable.
BladeStatus blade_session_transcript_json(const BladeSession *session, char **out_json);

// Release a session. Null is ignored.
//
// # Safety
// `session` must come from [`blade_session_new`] and not be used afterwards.
void blade_session_free(BladeSession *session);

// Resource configuration ('A', 'B' or 'C') of `group` (1-3) on `quiz` (1-3).
//
// # Safety
// `out_config` must be writable.
BladeStatus blade_config_for(uint8_t group, uint8_t quiz, char *out_config);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void blade_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLADE_H */
