#ifndef INSECSCAN_H
#define INSECSCAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InsecscanStatus {
  INSECSCAN_STATUS_OK = 0,
  INSECSCAN_STATUS_NULL_POINTER = 1,
  INSECSCAN_STATUS_INVALID_UTF8 = 2,
  INSECSCAN_STATUS_INVALID_CONFIG = 3,
  INSECSCAN_STATUS_PARSE_ERROR = 4,
  INSECSCAN_STATUS_IO_ERROR = 5,
  INSECSCAN_STATUS_PANIC = 6,
} InsecscanStatus;

// Analysis settings.
typedef struct InsecscanConfig InsecscanConfig;

// Result of one analysis.
typedef struct InsecscanReport InsecscanReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *insecscan_last_error_message(void);

// A configuration with default settings.
struct InsecscanConfig *insecscan_config_new(void);

// # Safety
// `cfg` must be null or a pointer from [`insecscan_config_new`] not yet freed.
void insecscan_config_free(struct InsecscanConfig *cfg);

// Set one option by its configuration-file key, e.g. `engine` to
// `relational` or `ct` to `true`.
//
// # Safety
// `cfg` must be a live config handle; `key` and `value` NUL-terminated strings.
enum InsecscanStatus insecscan_config_set(struct InsecscanConfig *cfg,
                                          const char *key,
                                          const char *value);

// Replace all settings with those of a TOML document.
//
// # Safety
// `cfg` must be a live config handle; `toml` a NUL-terminated string.
enum InsecscanStatus insecscan_config_load_toml(struct InsecscanConfig *cfg, const char *toml);

// Analyse `source`, naming it `file_name` in the report. On success
// `*out` receives a report handle.
//
// # Safety
// `cfg` must be a live config handle, `source` and `file_name`
// NUL-terminated strings and `out` a writable pointer.
enum InsecscanStatus insecscan_analyze(const struct InsecscanConfig *cfg,
                                       const char *source,
                                       const char *file_name,
                                       struct InsecscanReport **out);

// Number of findings, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live report handle.
size_t insecscan_report_finding_count(const struct InsecscanReport *report);

// Exit code the command-line tool would use: 0 clean, 1 findings,
// 2 refuted by the oracle. Returns 2 for a null handle.
//
// # Safety
// `report` must be null or a live report handle.
int32_t insecscan_report_exit_code(const struct InsecscanReport *report);

// The report as JSON. Release with [`insecscan_string_free`].
//
// # Safety
// `report` must be null or a live report handle.
char *insecscan_report_json(const struct InsecscanReport *report);

// # Safety
// `report` must be null or a live report handle.
void insecscan_report_free(struct InsecscanReport *report);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void insecscan_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSECSCAN_H */
