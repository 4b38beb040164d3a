#ifndef FPE_MPC_H
#define FPE_MPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of a C API call.
 */
typedef enum FmpcStatus {
  FMPC_STATUS_OK = 0,
  FMPC_STATUS_NULL_POINTER = 1,
  FMPC_STATUS_INVALID_ARGUMENT = 2,
  FMPC_STATUS_PARSE = 3,
  FMPC_STATUS_IO = 4,
  FMPC_STATUS_NUMERIC = 5,
  FMPC_STATUS_GRID_MISMATCH = 6,
  FMPC_STATUS_BUFFER_TOO_SMALL = 7,
  FMPC_STATUS_PANIC = 8,
} FmpcStatus;

/*
 Traces of one controller episode.
 */
typedef struct FmpcEpisode FmpcEpisode;

/*
 Density on a grid.
 */
typedef struct FmpcPdf FmpcPdf;

/*
 Parsed scenario.
 */
typedef struct FmpcScenario FmpcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *fmpc_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *fmpc_version(void);

/*
 Chang-Cooper weight `1/w - 1/(exp(w) - 1)`.
 */
double fmpc_chang_cooper_delta(double w);

/*
 Parses a scenario from TOML text.

 # Safety
 `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FmpcStatus fmpc_scenario_parse(const char *toml, struct FmpcScenario **out);

/*
 Reads a scenario file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FmpcStatus fmpc_scenario_load(const char *path, struct FmpcScenario **out);

/*
 # Safety
 `scenario` must come from this library or be null.
 */
void fmpc_scenario_free(struct FmpcScenario *scenario);

/*
 Runs one controller episode.

 # Safety
 `scenario` must be a live handle and `out` a valid pointer.
 */
enum FmpcStatus fmpc_episode_run(const struct FmpcScenario *scenario, struct FmpcEpisode **out);

/*
 Number of control steps, 0 for a null handle.

 # Safety
 `episode` must be a live handle or null.
 */
size_t fmpc_episode_steps(const struct FmpcEpisode *episode);

/*
 Copies the inputs as `steps x 3` row-major values.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum FmpcStatus fmpc_episode_inputs(const struct FmpcEpisode *episode, double *out, size_t len);

/*
 Copies the objective after each step (`steps` values).

 # Safety
 `out` must point to `len` writable doubles.
 */
enum FmpcStatus fmpc_episode_objectives(const struct FmpcEpisode *episode, double *out, size_t len);

/*
 Objective of the starting density and after the last step.

 # Safety
 Both outputs must be valid pointers.
 */
enum FmpcStatus fmpc_episode_summary(const struct FmpcEpisode *episode,
                                     double *initial_objective,
                                     double *final_objective);

/*
 Copy of the density after the last step.

 # Safety
 `episode` must be a live handle and `out` a valid pointer.
 */
enum FmpcStatus fmpc_episode_final_pdf(const struct FmpcEpisode *episode, struct FmpcPdf **out);

/*
 Monte-Carlo check of the episode's inputs against the scenario reference.
 Writes the per-joint share of finals inside the 95% band and the number
 of diverged samples.

 # Safety
 Handles must be live; `fraction_inside` must hold 2 doubles.
 */
enum FmpcStatus fmpc_episode_validate(const struct FmpcScenario *scenario,
                                      const struct FmpcEpisode *episode,
                                      size_t samples,
                                      uint64_t seed,
                                      double *fraction_inside,
                                      size_t *diverged);

/*
 # Safety
 `episode` must come from this library or be null.
 */
void fmpc_episode_free(struct FmpcEpisode *episode);

/*
 Normalized product Gaussian on a `points x points` grid.

 # Safety
 Array arguments must hold 2 doubles; `out` must be a valid pointer.
 */
enum FmpcStatus fmpc_pdf_gaussian(const double *lower,
                                  const double *upper,
                                  size_t points,
                                  const double *mu,
                                  const double *sigma,
                                  struct FmpcPdf **out);

/*
 One implicit step under nodal drift (`2 * nodes` values) and diffusion
 (`4 * nodes` values, row-major 2x2 per node). `previous` may be null for
 a backward-Euler start.

 # Safety
 Handles must be live and the arrays must hold the stated counts.
 */
enum FmpcStatus fmpc_pdf_step(const struct FmpcPdf *current,
                              const struct FmpcPdf *previous,
                              const double *drift,
                              const double *diffusion,
                              size_t nodes,
                              double dt,
                              struct FmpcPdf **out);

/*
 Number of grid nodes, 0 for a null handle.

 # Safety
 `pdf` must be a live handle or null.
 */
size_t fmpc_pdf_len(const struct FmpcPdf *pdf);

/*
 Copies the nodal values, `q2` index fastest.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum FmpcStatus fmpc_pdf_values(const struct FmpcPdf *pdf, double *out, size_t len);

/*
 Mean (2 values) and row-major covariance (4 values).

 # Safety
 `mean` must hold 2 and `cov` 4 writable doubles.
 */
enum FmpcStatus fmpc_pdf_moments(const struct FmpcPdf *pdf, double *mean, double *cov);

/*
 Sum of squared nodal differences.

 # Safety
 Handles must be live and `out` a valid pointer.
 */
enum FmpcStatus fmpc_pdf_l2(const struct FmpcPdf *a, const struct FmpcPdf *b, double *out);

/*
 # Safety
 `pdf` must come from this library or be null.
 */
void fmpc_pdf_free(struct FmpcPdf *pdf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPE_MPC_H */
