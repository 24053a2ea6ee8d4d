#ifndef NLAB_H
#define NLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NLAB_OK 0

#define NLAB_ERR_NULL 1

#define NLAB_ERR_INVALID 2

#define NLAB_ERR_SHAPE 3

#define NLAB_ERR_IO 4

#define NLAB_ERR_FORMAT 5

#define NLAB_ERR_NUMERIC 6

#define NLAB_ERR_PANIC 7

#define NLAB_FEATURE_LOSS 0

#define NLAB_FEATURE_CONFIDENCE 1

#define NLAB_STRATEGY_LOSS_ONLY 0

#define NLAB_STRATEGY_HARD 1

#define NLAB_STRATEGY_ELASTIC 2

#define NLAB_PROTOCOL_ONE_IMAGE 0

#define NLAB_PROTOCOL_FOUR_ROTATION 1

// A fitted two-component mixture.
typedef struct NlabGmm NlabGmm;

// A trained two-head network loaded from a checkpoint.
typedef struct NlabNetwork NlabNetwork;

typedef struct NlabGmmParams {
  double weights[2];
  double means[2];
  double variances[2];
  // Index of the clean component.
  uint32_t clean_component;
  // Nonzero when the input had no spread and every posterior is 0.5.
  uint32_t degenerate;
} NlabGmmParams;

// Cosine temperature schedule for the elastic decision.
typedef struct NlabSchedule {
  double alpha_start;
  double alpha_end;
  size_t total_epochs;
  double epsilon;
} NlabSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nlab_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t nlab_last_error(char *buf, size_t len);

// Loads a network checkpoint from `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
int32_t nlab_network_load(const char *path, struct NlabNetwork **out);

// Releases a network; null is ignored.
//
// # Safety
// `net` must come from [`nlab_network_load`] and not be used afterwards.
void nlab_network_free(struct NlabNetwork *net);

// Input height, width, channels and total parameter count.
//
// # Safety
// All pointers must be valid.
int32_t nlab_network_shape(const struct NlabNetwork *net,
                           size_t *height,
                           size_t *width,
                           size_t *channels,
                           size_t *parameters);

// Raw logits for `count` normalized C×H×W images.
//
// # Safety
// `images` holds `count × H × W × C` floats; `class_logits` has room for
// `count × 10` and `rot_logits` for `count × 4`.
int32_t nlab_network_forward(const struct NlabNetwork *net,
                             const float *images,
                             size_t count,
                             float *class_logits,
                             float *rot_logits);

// Class probabilities (`count × 10`) under `NLAB_PROTOCOL_ONE_IMAGE` or
// `NLAB_PROTOCOL_FOUR_ROTATION`.
//
// # Safety
// As for [`nlab_network_forward`]; `probabilities` has room for `count × 10`.
int32_t nlab_network_class_probabilities(const struct NlabNetwork *net,
                                         const float *images,
                                         size_t count,
                                         uint32_t protocol,
                                         double *probabilities);

// Fits a two-component mixture to `n` values of `feature`
// (`NLAB_FEATURE_LOSS` or `NLAB_FEATURE_CONFIDENCE`). A `max_iters` of 0
// uses the library defaults for the EM settings.
//
// # Safety
// `values` holds `n` doubles; `out` is a valid pointer.
int32_t nlab_gmm_fit(const double *values,
                     size_t n,
                     uint32_t feature,
                     size_t max_iters,
                     double tol,
                     struct NlabGmm **out);

// Releases a mixture; null is ignored.
//
// # Safety
// `gmm` must come from [`nlab_gmm_fit`] and not be used afterwards.
void nlab_gmm_free(struct NlabGmm *gmm);

// # Safety
// Both pointers must be valid.
int32_t nlab_gmm_params(const struct NlabGmm *gmm, struct NlabGmmParams *out);

// Clean-component posterior for each of `n` values.
//
// # Safety
// `values` and `posteriors` hold `n` doubles each.
int32_t nlab_gmm_posterior_clean(const struct NlabGmm *gmm,
                                 const double *values,
                                 size_t n,
                                 double *posteriors);

// λ and clean call for `n` posterior pairs under `strategy`. The schedule
// is only read for `NLAB_STRATEGY_ELASTIC` and may be null otherwise.
//
// # Safety
// `p_loss`, `p_conf` and `lambda` hold `n` doubles; `is_clean` holds `n`
// bytes, each set to 0 or 1.
int32_t nlab_decide(uint32_t strategy_code,
                    const double *p_loss,
                    const double *p_conf,
                    size_t n,
                    const struct NlabSchedule *sched,
                    size_t epoch,
                    double *lambda,
                    uint8_t *is_clean);

// Elastic temperature at `epoch`.
//
// # Safety
// Both pointers must be valid.
int32_t nlab_temperature_at(const struct NlabSchedule *sched, size_t epoch, double *alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLAB_H */
