#ifndef ALPHAFORGE_H
#define ALPHAFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_POINTER = 1,
  AF_STATUS_INVALID_ARGUMENT = 2,
  AF_STATUS_PARSE_ERROR = 3,
  AF_STATUS_DATA_ERROR = 4,
  AF_STATUS_IO = 5,
  AF_STATUS_PANIC = 6,
} AfStatus;

typedef struct AfBacktest AfBacktest;

/**
 * Daily Mega-Alpha predictions.
 */
typedef struct AfCombination AfCombination;

/**
 * A loaded or generated panel.
 */
typedef struct AfPanel AfPanel;

/**
 * Factor zoo bound to the panel it was built on.
 */
typedef struct AfZoo AfZoo;

typedef struct {
  double ic;
  double rank_ic;
  double icir;
  double rank_icir;
} AfMetrics;

typedef struct {
  size_t max_factors;
  size_t window;
  double min_ic;
  double min_icir;
  double ridge;
  size_t horizon;
  size_t entry_lag;
} AfCombinerConfig;

typedef struct {
  size_t top_k;
  size_t max_changes;
  double cost_bps;
} AfBacktestConfig;

typedef struct {
  size_t days;
  double total_return;
  double benchmark_return;
  double excess_return;
  double sharpe;
  double max_drawdown;
} AfBacktestSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *af_last_error(void);

/**
 * Reads a `date,symbol,open,high,low,close,volume,vwap[,label]` CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
AfStatus af_panel_load_csv(const char *path, AfPanel **out);

/**
 * Random-walk panel whose label is the planted `ts_mean(volume,5)` plus noise.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AfStatus af_panel_synthetic(size_t n_stocks,
                            size_t n_days,
                            double noise_std,
                            uint64_t seed,
                            AfPanel **out);

/**
 * # Safety
 * `panel` must be a live handle; `days` and `stocks` valid pointers.
 */
AfStatus af_panel_dims(const AfPanel *panel, size_t *days, size_t *stocks);

/**
 * # Safety
 * `panel` must be NULL or a handle not yet freed.
 */
void af_panel_free(AfPanel *panel);

/**
 * Evaluates `formula` into `out`, which holds `len >= days * stocks` values.
 *
 * # Safety
 * `panel` must be a live handle, `formula` NUL-terminated, `out` writable
 * for `len` doubles.
 */
AfStatus af_eval_expr(const AfPanel *panel, const char *formula, double *out, size_t len);

/**
 * IC, RankIC and their ratios of `formula` against the panel label.
 *
 * # Safety
 * `panel` must be a live handle, `formula` NUL-terminated, `out` valid.
 */
AfStatus af_factor_metrics(const AfPanel *panel,
                           const char *formula,
                           size_t row_start,
                           size_t row_end,
                           AfMetrics *out);

/**
 * Zoo from `n` formulas, signed by their IC on the row range.
 *
 * # Safety
 * `formulas` must point to `n` NUL-terminated strings.
 */
AfStatus af_zoo_from_formulas(const AfPanel *panel,
                              const char *const *formulas,
                              size_t n,
                              size_t row_start,
                              size_t row_end,
                              AfZoo **out);

/**
 * Reads a zoo JSON file and evaluates it on `panel`.
 *
 * # Safety
 * `panel` must be a live handle, `path` NUL-terminated, `out` valid.
 */
AfStatus af_zoo_load(const AfPanel *panel,
                     const char *path,
                     size_t row_start,
                     size_t row_end,
                     AfZoo **out);

/**
 * # Safety
 * `zoo` must be a live handle and `len` valid.
 */
AfStatus af_zoo_len(const AfZoo *zoo, size_t *len);

/**
 * # Safety
 * `zoo` must be NULL or a handle not yet freed.
 */
void af_zoo_free(AfZoo *zoo);

AfCombinerConfig af_combiner_config_default(void);

/**
 * Dynamic combination over the row range. `cfg` may be NULL for defaults.
 *
 * # Safety
 * `zoo` and `panel` must be live handles, the zoo built on this panel.
 */
AfStatus af_combine(const AfZoo *zoo,
                    const AfPanel *panel,
                    const AfCombinerConfig *cfg,
                    size_t row_start,
                    size_t row_end,
                    AfCombination **out);

/**
 * Copies the `days × stocks` predictions (NaN outside the range).
 *
 * # Safety
 * `comb` must be a live handle, `out` writable for `len` doubles.
 */
AfStatus af_combination_predictions(const AfCombination *comb, double *out, size_t len);

/**
 * Mean daily IC of the predictions over the combined range.
 *
 * # Safety
 * `comb` must be a live handle and `ic` valid.
 */
AfStatus af_combination_ic(const AfCombination *comb, double *ic);

/**
 * # Safety
 * `comb` must be NULL or a handle not yet freed.
 */
void af_combination_free(AfCombination *comb);

AfBacktestConfig af_backtest_config_default(void);

/**
 * Top-k backtest of `days × stocks` scores at vwap. `cfg` may be NULL.
 *
 * # Safety
 * `panel` must be a live handle and `scores` readable for `len` doubles.
 */
AfStatus af_backtest(const AfPanel *panel,
                     const double *scores,
                     size_t len,
                     const AfBacktestConfig *cfg,
                     size_t row_start,
                     size_t row_end,
                     AfBacktest **out);

/**
 * Number of simulated days.
 *
 * # Safety
 * `bt` must be a live handle and `len` valid.
 */
AfStatus af_backtest_len(const AfBacktest *bt, size_t *len);

/**
 * Daily net returns, one per simulated day.
 *
 * # Safety
 * `bt` must be a live handle, `out` writable for `len` doubles.
 */
AfStatus af_backtest_returns(const AfBacktest *bt, double *out, size_t len);

/**
 * # Safety
 * `bt` must be a live handle and `out` valid.
 */
AfStatus af_backtest_summary(const AfBacktest *bt, AfBacktestSummary *out);

/**
 * # Safety
 * `bt` must be NULL or a handle not yet freed.
 */
void af_backtest_free(AfBacktest *bt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALPHAFORGE_H */
