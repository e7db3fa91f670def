#ifndef GDIFF_H
#define GDIFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GdiffSampler {
  GDIFF_SAMPLER_DDPM = 0,
  GDIFF_SAMPLER_DDIM = 1,
} GdiffSampler;

typedef enum GdiffStatus {
  GDIFF_STATUS_OK = 0,
  GDIFF_STATUS_NULL_POINTER = 1,
  GDIFF_STATUS_INVALID_ARGUMENT = 2,
  GDIFF_STATUS_SHAPE = 3,
  GDIFF_STATUS_FORMAT = 4,
  GDIFF_STATUS_IO = 5,
  GDIFF_STATUS_NON_FINITE = 6,
  GDIFF_STATUS_PANIC = 7,
} GdiffStatus;

typedef struct GdiffModel GdiffModel;

typedef struct GdiffProcess GdiffProcess;

typedef struct GdiffRng GdiffRng;

typedef struct GdiffSchedule GdiffSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *gdiff_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gdiff_version(void);

enum GdiffStatus gdiff_schedule_linear(size_t steps,
                                       double beta_start,
                                       double beta_end,
                                       struct GdiffSchedule **out);

enum GdiffStatus gdiff_schedule_from_betas(const double *betas,
                                           size_t len,
                                           struct GdiffSchedule **out);

/**
 * Builds a schedule from its JSON description, e.g.
 * `{"type":"linear","T":1000,"beta_start":1e-4,"beta_end":0.02}`.
 */
enum GdiffStatus gdiff_schedule_from_json(const char *json, struct GdiffSchedule **out);

size_t gdiff_schedule_len(const struct GdiffSchedule *schedule);

/**
 * `ᾱ_t` for `t` in `[0, T]`.
 */
enum GdiffStatus gdiff_schedule_alpha_bar(const struct GdiffSchedule *schedule,
                                          size_t t,
                                          double *out);

/**
 * Writes the 16-character schedule hash plus a NUL into `buf`, which must
 * hold at least 17 bytes.
 */
enum GdiffStatus gdiff_schedule_hash(const struct GdiffSchedule *schedule, char *buf, size_t cap);

void gdiff_schedule_free(struct GdiffSchedule *schedule);

/**
 * Binds a noise family, given as JSON such as `{"family":"gamma","theta0":0.001}`,
 * to a copy of `schedule`.
 */
enum GdiffStatus gdiff_process_new(const struct GdiffSchedule *schedule,
                                   const char *family_json,
                                   struct GdiffProcess **out);

void gdiff_process_free(struct GdiffProcess *process);

/**
 * Random stream `index` of `domain` under `seed`.
 */
enum GdiffStatus gdiff_rng_new(uint64_t seed,
                               uint64_t domain,
                               uint64_t index,
                               struct GdiffRng **out);

void gdiff_rng_free(struct GdiffRng *rng);

/**
 * One closed-form jump of `n` independent elements from `x0` to step `t`.
 * Writes `x_t` and the unit-variance noise target, each of length `n`.
 */
enum GdiffStatus gdiff_closed_form_sample(const struct GdiffProcess *process,
                                          const double *x0,
                                          size_t n,
                                          size_t t,
                                          struct GdiffRng *rng,
                                          double *x_t_out,
                                          double *target_out);

/**
 * Loads a checkpoint written by `gdiff train`.
 */
enum GdiffStatus gdiff_model_load(const char *path, struct GdiffModel **out);

/**
 * Number of values in one sample.
 */
size_t gdiff_model_data_dim(const struct GdiffModel *model);

/**
 * Number of diffusion steps the model was trained with.
 */
size_t gdiff_model_steps(const struct GdiffModel *model);

/**
 * Noise prediction for `rows` samples at timestep `t`. `x_t` and `out`
 * hold `rows * data_dim` values.
 */
enum GdiffStatus gdiff_model_predict(const struct GdiffModel *model,
                                     const double *x_t,
                                     size_t rows,
                                     size_t t,
                                     double *out);

/**
 * Draws `n` samples with `steps` evenly spaced timesteps. `out` holds
 * `n * data_dim` values.
 */
enum GdiffStatus gdiff_model_sample(const struct GdiffModel *model,
                                    enum GdiffSampler kind,
                                    size_t steps,
                                    double eta,
                                    size_t n,
                                    struct GdiffRng *rng,
                                    double *out);

void gdiff_model_free(struct GdiffModel *model);

/**
 * Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
 */
enum GdiffStatus gdiff_ks_two_sample(const double *a,
                                     size_t na,
                                     const double *b,
                                     size_t nb,
                                     double *d_out,
                                     double *p_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GDIFF_H */
