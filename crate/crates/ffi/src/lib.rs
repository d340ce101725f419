//! C interface to alphaforge.
//!
//! Objects cross the boundary as opaque handles freed by their `*_free`
//! function. Every call returns an [`AfStatus`]; on failure the message is
//! available from [`af_last_error`] on the same thread. Day ranges are
//! half-open row spans `[row_start, row_end)` on the panel's date axis, and
//! matrices are row-major `days × stocks` with NaN for missing values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use alphaforge::backtest::{run_backtest, BacktestConfig, BacktestResult};
use alphaforge::combiner::{run_combination_rows, Combination, CombinerConfig};
use alphaforge::dataset::{load_panel, make_synthetic, DataError, PanelData, PanelSchema, SyntheticConfig};
use alphaforge::dsl::{parse_text, Vocabulary};
use alphaforge::eval::Evaluator;
use alphaforge::metrics::factor_metrics;
use alphaforge::zoo::{FactorZoo, ZooError};
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DataError = 4,
    Io = 5,
    Panic = 6,
}

/// A loaded or generated panel.
pub struct AfPanel {
    inner: PanelData,
}

/// Factor zoo bound to the panel it was built on.
pub struct AfZoo {
    inner: FactorZoo,
}

/// Daily Mega-Alpha predictions.
pub struct AfCombination {
    inner: Combination,
    ic: f64,
}

pub struct AfBacktest {
    inner: BacktestResult,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AfMetrics {
    pub ic: f64,
    pub rank_ic: f64,
    pub icir: f64,
    pub rank_icir: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfCombinerConfig {
    pub max_factors: usize,
    pub window: usize,
    pub min_ic: f64,
    pub min_icir: f64,
    pub ridge: f64,
    pub horizon: usize,
    pub entry_lag: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfBacktestConfig {
    pub top_k: usize,
    pub max_changes: usize,
    pub cost_bps: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AfBacktestSummary {
    pub days: usize,
    pub total_return: f64,
    pub benchmark_return: f64,
    pub excess_return: f64,
    pub sharpe: f64,
    pub max_drawdown: f64,
}

struct Failure(AfStatus, String);

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::Io(_) => AfStatus::Io,
            DataError::Parse { .. } | DataError::Csv(_) => AfStatus::ParseError,
            _ => AfStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

impl From<ZooError> for Failure {
    fn from(e: ZooError) -> Self {
        let status = match e {
            ZooError::Io(_) => AfStatus::Io,
            ZooError::Json(_) | ZooError::Formula { .. } => AfStatus::ParseError,
            ZooError::Invalid(_) => AfStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AfStatus::Ok,
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {m}"));
            AfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AfStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

fn rows(panel: &PanelData, start: usize, end: usize) -> Result<std::ops::Range<usize>, Failure> {
    if start >= end || end > panel.n_days() {
        return Err(invalid(format!("row range [{start}, {end}) is empty or beyond {} days", panel.n_days())));
    }
    Ok(start..end)
}

unsafe fn fill(out: *mut f64, len: usize, src: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err(invalid(format!("buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn af_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a `date,symbol,open,high,low,close,volume,vwap[,label]` CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_panel_load_csv(path: *const c_char, out: *mut *mut AfPanel) -> AfStatus {
    guard(|| {
        let path = text(path, "path")?;
        let p = load_panel(path, &PanelSchema::default())?;
        put(out, AfPanel { inner: p })
    })
}

/// Random-walk panel whose label is the planted `ts_mean(volume,5)` plus noise.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_panel_synthetic(
    n_stocks: usize,
    n_days: usize,
    noise_std: f64,
    seed: u64,
    out: *mut *mut AfPanel,
) -> AfStatus {
    guard(|| {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(invalid("noise_std must be non-negative"));
        }
        let cfg = SyntheticConfig { n_stocks, n_days, noise_std, seed, ..Default::default() };
        put(out, AfPanel { inner: make_synthetic(&cfg)? })
    })
}

/// # Safety
/// `panel` must be a live handle; `days` and `stocks` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn af_panel_dims(panel: *const AfPanel, days: *mut usize, stocks: *mut usize) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        if days.is_null() || stocks.is_null() {
            return Err(null("days/stocks"));
        }
        *days = p.n_days();
        *stocks = p.n_stocks();
        Ok(())
    })
}

/// # Safety
/// `panel` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_panel_free(panel: *mut AfPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Evaluates `formula` into `out`, which holds `len >= days * stocks` values.
///
/// # Safety
/// `panel` must be a live handle, `formula` NUL-terminated, `out` writable
/// for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_eval_expr(panel: *const AfPanel, formula: *const c_char, out: *mut f64, len: usize) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let expr = parse_text(text(formula, "formula")?).map_err(|e| Failure(AfStatus::ParseError, e.to_string()))?;
        let v = Evaluator::new(p).values(&expr);
        fill(out, len, v.as_slice().expect("standard layout"))
    })
}

/// IC, RankIC and their ratios of `formula` against the panel label.
///
/// # Safety
/// `panel` must be a live handle, `formula` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn af_factor_metrics(
    panel: *const AfPanel,
    formula: *const c_char,
    row_start: usize,
    row_end: usize,
    out: *mut AfMetrics,
) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let r = rows(p, row_start, row_end)?;
        let expr = parse_text(text(formula, "formula")?).map_err(|e| Failure(AfStatus::ParseError, e.to_string()))?;
        let v = Evaluator::new(p).values(&expr);
        let m = factor_metrics(&v.view(), &p.label().view(), r);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = AfMetrics { ic: m.ic, rank_ic: m.rank_ic, icir: m.icir, rank_icir: m.rank_icir };
        Ok(())
    })
}

/// Zoo from `n` formulas, signed by their IC on the row range.
///
/// # Safety
/// `formulas` must point to `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn af_zoo_from_formulas(
    panel: *const AfPanel,
    formulas: *const *const c_char,
    n: usize,
    row_start: usize,
    row_end: usize,
    out: *mut *mut AfZoo,
) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let r = rows(p, row_start, row_end)?;
        if formulas.is_null() && n > 0 {
            return Err(null("formulas"));
        }
        let mut srcs = Vec::with_capacity(n);
        for k in 0..n {
            srcs.push(text(*formulas.add(k), "formula")?);
        }
        let zoo = FactorZoo::from_formulas(&srcs, p, r, Vocabulary::default(), 20)?;
        put(out, AfZoo { inner: zoo })
    })
}

/// Reads a zoo JSON file and evaluates it on `panel`.
///
/// # Safety
/// `panel` must be a live handle, `path` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn af_zoo_load(
    panel: *const AfPanel,
    path: *const c_char,
    row_start: usize,
    row_end: usize,
    out: *mut *mut AfZoo,
) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let r = rows(p, row_start, row_end)?;
        let zoo = FactorZoo::load(text(path, "path")?, p, r)?;
        put(out, AfZoo { inner: zoo })
    })
}

/// # Safety
/// `zoo` must be a live handle and `len` valid.
#[no_mangle]
pub unsafe extern "C" fn af_zoo_len(zoo: *const AfZoo, len: *mut usize) -> AfStatus {
    guard(|| {
        let z = &deref(zoo, "zoo")?.inner;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = z.len();
        Ok(())
    })
}

/// # Safety
/// `zoo` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_zoo_free(zoo: *mut AfZoo) {
    if !zoo.is_null() {
        drop(Box::from_raw(zoo));
    }
}

#[no_mangle]
pub extern "C" fn af_combiner_config_default() -> AfCombinerConfig {
    let c = CombinerConfig::default();
    AfCombinerConfig {
        max_factors: c.max_factors,
        window: c.window,
        min_ic: c.min_ic,
        min_icir: c.min_icir,
        ridge: c.ridge,
        horizon: c.horizon,
        entry_lag: c.entry_lag,
    }
}

/// Dynamic combination over the row range. `cfg` may be NULL for defaults.
///
/// # Safety
/// `zoo` and `panel` must be live handles, the zoo built on this panel.
#[no_mangle]
pub unsafe extern "C" fn af_combine(
    zoo: *const AfZoo,
    panel: *const AfPanel,
    cfg: *const AfCombinerConfig,
    row_start: usize,
    row_end: usize,
    out: *mut *mut AfCombination,
) -> AfStatus {
    guard(|| {
        let z = &deref(zoo, "zoo")?.inner;
        let p = &deref(panel, "panel")?.inner;
        let r = rows(p, row_start, row_end)?;
        let c = cfg.as_ref().copied().unwrap_or_else(|| af_combiner_config_default());
        let cc = CombinerConfig {
            max_factors: c.max_factors,
            window: c.window,
            min_ic: c.min_ic,
            min_icir: c.min_icir,
            ridge: c.ridge,
            horizon: c.horizon,
            entry_lag: c.entry_lag,
        };
        let errs = cc.validate();
        if !errs.is_empty() {
            return Err(invalid(errs.join("; ")));
        }
        if z.entries().iter().any(|e| e.values.dim() != (p.n_days(), p.n_stocks())) {
            return Err(invalid("zoo was built on a panel of a different shape"));
        }
        let comb = run_combination_rows(z, p, r, &cc);
        let ic = comb.ic(p);
        put(out, AfCombination { inner: comb, ic })
    })
}

/// Copies the `days × stocks` predictions (NaN outside the range).
///
/// # Safety
/// `comb` must be a live handle, `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_combination_predictions(comb: *const AfCombination, out: *mut f64, len: usize) -> AfStatus {
    guard(|| {
        let c = &deref(comb, "combination")?.inner;
        fill(out, len, c.predictions.as_slice().expect("standard layout"))
    })
}

/// Mean daily IC of the predictions over the combined range.
///
/// # Safety
/// `comb` must be a live handle and `ic` valid.
#[no_mangle]
pub unsafe extern "C" fn af_combination_ic(comb: *const AfCombination, ic: *mut f64) -> AfStatus {
    guard(|| {
        let c = deref(comb, "combination")?;
        if ic.is_null() {
            return Err(null("ic"));
        }
        *ic = c.ic;
        Ok(())
    })
}

/// # Safety
/// `comb` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_combination_free(comb: *mut AfCombination) {
    if !comb.is_null() {
        drop(Box::from_raw(comb));
    }
}

#[no_mangle]
pub extern "C" fn af_backtest_config_default() -> AfBacktestConfig {
    let c = BacktestConfig::default();
    AfBacktestConfig { top_k: c.top_k, max_changes: c.max_changes, cost_bps: c.cost_bps }
}

/// Top-k backtest of `days × stocks` scores at vwap. `cfg` may be NULL.
///
/// # Safety
/// `panel` must be a live handle and `scores` readable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_backtest(
    panel: *const AfPanel,
    scores: *const f64,
    len: usize,
    cfg: *const AfBacktestConfig,
    row_start: usize,
    row_end: usize,
    out: *mut *mut AfBacktest,
) -> AfStatus {
    guard(|| {
        let p = &deref(panel, "panel")?.inner;
        let r = rows(p, row_start, row_end)?;
        if scores.is_null() {
            return Err(null("scores"));
        }
        let shape = (p.n_days(), p.n_stocks());
        if len != shape.0 * shape.1 {
            return Err(invalid(format!("scores hold {len} values, panel needs {}", shape.0 * shape.1)));
        }
        let s = ArrayView2::from_shape(shape, std::slice::from_raw_parts(scores, len)).expect("length checked");
        let c = cfg.as_ref().copied().unwrap_or_else(|| af_backtest_config_default());
        let bc = BacktestConfig { top_k: c.top_k, max_changes: c.max_changes, cost_bps: c.cost_bps, ..Default::default() };
        let res = run_backtest(&s, p, r, &bc)?;
        put(out, AfBacktest { inner: res })
    })
}

/// Number of simulated days.
///
/// # Safety
/// `bt` must be a live handle and `len` valid.
#[no_mangle]
pub unsafe extern "C" fn af_backtest_len(bt: *const AfBacktest, len: *mut usize) -> AfStatus {
    guard(|| {
        let b = &deref(bt, "backtest")?.inner;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = b.len();
        Ok(())
    })
}

/// Daily net returns, one per simulated day.
///
/// # Safety
/// `bt` must be a live handle, `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_backtest_returns(bt: *const AfBacktest, out: *mut f64, len: usize) -> AfStatus {
    guard(|| fill(out, len, &deref(bt, "backtest")?.inner.returns))
}

/// # Safety
/// `bt` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn af_backtest_summary(bt: *const AfBacktest, out: *mut AfBacktestSummary) -> AfStatus {
    guard(|| {
        let s = deref(bt, "backtest")?.inner.summary();
        if out.is_null() {
            return Err(null("out"));
        }
        *out = AfBacktestSummary {
            days: s.days,
            total_return: s.total_return,
            benchmark_return: s.benchmark_return,
            excess_return: s.excess_return,
            sharpe: s.sharpe,
            max_drawdown: s.max_drawdown,
        };
        Ok(())
    })
}

/// # Safety
/// `bt` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_backtest_free(bt: *mut AfBacktest) {
    if !bt.is_null() {
        drop(Box::from_raw(bt));
    }
}
