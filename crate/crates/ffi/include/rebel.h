#ifndef REBEL_H
#define REBEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible binding.
 */
typedef enum RebelStatus {
  RebelOk = 0,
  RebelNullArgument = 1,
  RebelInvalidUtf8 = 2,
  RebelConfigError = 3,
  RebelEngineError = 4,
} RebelStatus;

/**
 * Opaque engine handle.
 */
typedef struct RebelEngine RebelEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Borrowed; valid
 * until the next rebel call on the same thread. Never null.
 */
const char *rebel_last_error(void);

/**
 * Build an engine from config files. Every path may be null: a null
 * engine config means defaults, a null tools path means no tools, and
 * exactly one of backend config / replay transcript must be given.
 * Returns null on failure; consult [`rebel_last_error`].
 *
 * # Safety
 * Non-null arguments must point to NUL-terminated strings.
 */
struct RebelEngine *rebel_engine_open(const char *engine_config_path,
                                      const char *backend_config_path,
                                      const char *tools_path,
                                      const char *replay_path);

/**
 * Answer a question; on success `*answer_out` holds the answer text.
 *
 * # Safety
 * `engine` must come from [`rebel_engine_open`] and not be freed;
 * `question` must be a NUL-terminated string; `answer_out` must be a
 * valid pointer.
 */
enum RebelStatus rebel_engine_ask(struct RebelEngine *engine,
                                  const char *question,
                                  char **answer_out);

/**
 * Answer a question; on success `*result_json_out` holds the full result
 * (answer, fact, trace tree, metrics) as a JSON document.
 *
 * # Safety
 * Same contract as [`rebel_engine_ask`].
 */
enum RebelStatus rebel_engine_ask_json(struct RebelEngine *engine,
                                       const char *question,
                                       char **result_json_out);

/**
 * Release an engine handle. Null is a no-op.
 *
 * # Safety
 * `engine` must come from [`rebel_engine_open`] and not already be freed.
 */
void rebel_engine_free(struct RebelEngine *engine);

/**
 * Release a string returned through an out parameter. Null is a no-op.
 *
 * # Safety
 * `s` must come from a rebel function and not already be freed.
 */
void rebel_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REBEL_H */
