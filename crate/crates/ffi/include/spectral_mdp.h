#ifndef SPECTRAL_MDP_H
#define SPECTRAL_MDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The values match the command-line exit codes where both exist.
typedef enum SmStatus {
  SM_STATUS_OK = 0,
  // Internal or numerical failure, such as non-convergence.
  SM_STATUS_FAILED = 1,
  // Invalid input: scenario, model, distribution or argument.
  SM_STATUS_INVALID = 2,
  // A size cap refused the computation.
  SM_STATUS_CAP_REFUSED = 3,
  // A null pointer or non-UTF-8 string was passed.
  SM_STATUS_NULL_ARGUMENT = 4,
  // The library panicked; the handle arguments are left untouched.
  SM_STATUS_PANIC = 5,
} SmStatus;

typedef enum SmCommand {
  SM_COMMAND_SOLVE_INNER = 0,
  SM_COMMAND_SOLVE_OUTER = 1,
  SM_COMMAND_REINSURANCE = 2,
  SM_COMMAND_ORACLE = 3,
  SM_COMMAND_GAP_STUDY = 4,
} SmCommand;

// Which scalar of a report to read.
typedef enum SmField {
  SM_FIELD_INNER_VALUE = 0,
  SM_FIELD_OUTER_VALUE = 1,
  SM_FIELD_ERROR_BOUND = 2,
  SM_FIELD_ORACLE_VALUE = 3,
  SM_FIELD_GAP = 4,
  SM_FIELD_C_HAT = 5,
  SM_FIELD_WALL_CLOCK_MS = 6,
} SmField;

// The report of one run.
typedef struct SmReport SmReport;

// A parsed and validated scenario.
typedef struct SmScenario SmScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *sm_last_error(void);

// Version stamp as a static string.
const char *sm_version(void);

// Parses a TOML scenario.
//
// # Safety
// `toml` must be a nul-terminated string and `out` a valid pointer.
enum SmStatus sm_scenario_parse(const char *toml, struct SmScenario **out);

// Reads and parses a scenario file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum SmStatus sm_scenario_load(const char *path, struct SmScenario **out);

// # Safety
// `scenario` must come from `sm_scenario_parse`/`sm_scenario_load` or be null.
void sm_scenario_free(struct SmScenario *scenario);

// Runs `command` on the scenario. `seed` overrides the scenario seed when
// `use_seed` is non-zero.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum SmStatus sm_run(const struct SmScenario *scenario,
                     enum SmCommand command,
                     int32_t use_seed,
                     uint64_t seed,
                     struct SmReport **out);

// # Safety
// `report` must come from `sm_run` or be null.
void sm_report_free(struct SmReport *report);

// Reads a scalar field. Fails with `Invalid` when the run did not set it.
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum SmStatus sm_report_value(const struct SmReport *report, enum SmField field, double *out);

// The report as JSON; `with_timing == 0` omits timing fields. Release the
// string with `sm_string_free`.
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum SmStatus sm_report_json(const struct SmReport *report, int32_t with_timing, char **out);

// # Safety
// `s` must come from this library or be null.
void sm_string_free(char *s);

// ρ_φ of the law with `n` atoms, for the step spectrum with `k` values on
// the `k + 1` breakpoints.
//
// # Safety
// Arrays must hold the stated number of elements and `out` must be valid.
enum SmStatus sm_spectral_risk(const double *atoms,
                               const double *probs,
                               size_t n,
                               const double *breakpoints,
                               const double *values,
                               size_t k,
                               double *out);

// ES_α of the law with `n` atoms.
//
// # Safety
// Arrays must hold `n` elements and `out` must be valid.
enum SmStatus sm_expected_shortfall(const double *atoms,
                                    const double *probs,
                                    size_t n,
                                    double alpha,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_MDP_H */
