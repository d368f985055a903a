#ifndef UNIMOM_H
#define UNIMOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UnimomStatus {
  UNIMOM_STATUS_OK = 0,
  UNIMOM_STATUS_NULL_POINTER = 1,
  UNIMOM_STATUS_INVALID_ARGUMENT = 2,
  UNIMOM_STATUS_IO = 3,
  UNIMOM_STATUS_PARSE = 4,
  UNIMOM_STATUS_DATA = 5,
  UNIMOM_STATUS_NUMERIC = 6,
  UNIMOM_STATUS_PANIC = 7,
} UnimomStatus;

typedef enum UnimomLayout {
  UNIMOM_LAYOUT_LONG = 0,
  UNIMOM_LAYOUT_PER_ASSET = 1,
} UnimomLayout;

typedef enum UnimomLoss {
  UNIMOM_LOSS_SOFTCAP = 0,
  UNIMOM_LOSS_SHARPE = 1,
} UnimomLoss;

/**
 * Opaque trained model.
 */
typedef struct UnimomModel UnimomModel;

/**
 * Opaque price panel.
 */
typedef struct UnimomPanel UnimomPanel;

/**
 * Annualized statistics; percentages are in percent.
 */
typedef struct UnimomMetrics {
  double ann_return_pct;
  double ann_vol_pct;
  double sharpe;
  double sortino;
  double max_dd_pct;
} UnimomMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in
 * bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t unimom_last_error(char *buf, size_t len);

/**
 * Loads a settlement-price panel.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum UnimomStatus unimom_panel_load(const char *path,
                                    enum UnimomLayout layout,
                                    struct UnimomPanel **out);

/**
 * Synthetic panel with planted per-asset trends over whole calendar years.
 *
 * # Safety
 * `out` must be writable.
 */
enum UnimomStatus unimom_panel_synthesize(uint64_t seed,
                                          size_t n_assets,
                                          int32_t start_year,
                                          uint32_t years,
                                          struct UnimomPanel **out);

/**
 * # Safety
 * `panel` must come from this library or be null; `n_assets` and
 * `n_dates` must be writable.
 */
enum UnimomStatus unimom_panel_shape(const struct UnimomPanel *panel,
                                     size_t *n_assets,
                                     size_t *n_dates);

/**
 * # Safety
 * `panel` must come from this library (or be null) and not be used again.
 */
void unimom_panel_free(struct UnimomPanel *panel);

/**
 * Loads a model checkpoint written by the backtest.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum UnimomStatus unimom_model_load(const char *path, struct UnimomModel **out);

/**
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum UnimomStatus unimom_model_param_count(const struct UnimomModel *model, size_t *out);

/**
 * # Safety
 * `model` must come from this library (or be null) and not be used again.
 */
void unimom_model_free(struct UnimomModel *model);

/**
 * Soft-capped Sharpe loss of a Sharpe ratio value.
 *
 * # Safety
 * `out` must be writable.
 */
enum UnimomStatus unimom_soft_cap_loss(double sr, double tau, double *out);

/**
 * Performance statistics of `len` daily returns.
 *
 * # Safety
 * `returns` must be valid for `len` reads; `out` must be writable.
 */
enum UnimomStatus unimom_summarize(const double *returns, size_t len, struct UnimomMetrics *out);

/**
 * Long-only maximum-Sharpe weights over three assets on a grid of
 * `resolution` steps. `sigma` is row-major 3x3.
 *
 * # Safety
 * `mu` must hold 3 values, `sigma` 9, and `out` room for 3.
 */
enum UnimomStatus unimom_mvo_solve(const double *mu,
                                   const double *sigma,
                                   size_t resolution,
                                   double *out);

/**
 * Runs the walk-forward backtest on `panel` and writes the run and report
 * files under `out_dir`. `config_path` may be null for defaults.
 *
 * # Safety
 * `panel` must come from this library; string arguments must be
 * NUL-terminated.
 */
enum UnimomStatus unimom_backtest(const struct UnimomPanel *panel,
                                  const char *config_path,
                                  enum UnimomLoss loss,
                                  const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNIMOM_H */
