//! Daily re-selection and re-weighting of zoo factors into one Mega-Alpha.
//!
//! On day `t` every factor is scored on the trailing window of days
//! `[t−W, t−H−L]`, whose labels are fully realized by `t`. Factors passing
//! both thresholds are ranked by trailing IC, the best `N` are kept, and a
//! ridge regression of the day-z-scored label on the day-z-scored factors,
//! pooled over the window, gives the weights applied to day `t`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataError, DateRange, PanelData};
use crate::eval::cross_sectional_zscore;
use crate::metrics::{daily_ic_series, factor_metrics, gate_icir, mean_and_std};
use crate::zoo::FactorZoo;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombinerConfig {
    /// Most factors used on any day (N).
    pub max_factors: usize,
    /// Trailing window length in trading days (W).
    pub window: usize,
    /// IC' threshold on the trailing IC.
    pub min_ic: f64,
    /// ICIR' threshold on the trailing ICIR.
    pub min_icir: f64,
    pub ridge: f64,
    pub horizon: usize,
    pub entry_lag: usize,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        CombinerConfig { max_factors: 10, window: 120, min_ic: 0.01, min_icir: 0.05, ridge: 1e-4, horizon: 21, entry_lag: 1 }
    }
}

impl CombinerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.max_factors == 0 {
            errs.push("combiner.max_factors must be at least 1".to_string());
        }
        if self.window <= self.horizon + self.entry_lag {
            errs.push(format!(
                "combiner.window ({}) must exceed horizon + entry_lag ({})",
                self.window,
                self.horizon + self.entry_lag
            ));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            errs.push(format!("combiner.ridge must be non-negative, got {}", self.ridge));
        }
        for (name, v) in [("min_ic", self.min_ic), ("min_icir", self.min_icir)] {
            if !v.is_finite() {
                errs.push(format!("combiner.{name} must be finite"));
            }
        }
        errs
    }

    /// Row span of the realized window for day `t`, empty when too early.
    pub fn window_rows(&self, t: usize) -> Range<usize> {
        let lag = self.horizon + self.entry_lag;
        if t < self.window || t < lag {
            return 0..0;
        }
        (t - self.window)..(t - lag + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub id: usize,
    pub expr: String,
    pub weight: f64,
    /// Trailing IC and ICIR that qualified the factor on this day.
    pub ic: f64,
    pub icir: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MegaAlphaSnapshot {
    pub date: NaiveDate,
    pub entries: Vec<SnapshotEntry>,
    pub intercept: f64,
    /// The normal equations were singular and the minimum-norm solution was used.
    #[serde(default)]
    pub min_norm: bool,
}

/// A selected factor with its trailing statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selected {
    /// Position in the zoo.
    pub index: usize,
    pub id: usize,
    pub ic: f64,
    pub icir: f64,
}

/// Per-factor quantities reused across days.
pub struct CombinerCache<'a> {
    zoo: &'a FactorZoo,
    panel: &'a PanelData,
    zscores: Vec<Array2<f64>>,
    daily_ic: Vec<Vec<f64>>,
    label_z: Array2<f64>,
}

impl<'a> CombinerCache<'a> {
    pub fn new(zoo: &'a FactorZoo, panel: &'a PanelData) -> CombinerCache<'a> {
        let label = panel.label().view();
        let zscores = zoo.entries().par_iter().map(|e| cross_sectional_zscore(&e.values.view())).collect();
        let daily_ic = zoo.entries().par_iter().map(|e| daily_ic_series(&e.values.view(), &label)).collect();
        CombinerCache { zoo, panel, zscores, daily_ic, label_z: cross_sectional_zscore(&label) }
    }

    pub fn zoo(&self) -> &FactorZoo {
        self.zoo
    }
}

fn trailing(series: &[f64], rows: Range<usize>) -> (f64, f64) {
    let days = &series[rows];
    (mean_and_std(days).0, gate_icir(days))
}

/// Factors that pass IC' and ICIR' on day `t`'s realized window, by trailing
/// IC descending then id ascending, at most `N`.
pub fn select_factors_at(t: usize, cache: &CombinerCache<'_>, cfg: &CombinerConfig) -> Vec<Selected> {
    let rows = cfg.window_rows(t);
    if rows.is_empty() {
        return Vec::new();
    }
    let mut picked: Vec<Selected> = cache
        .zoo
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(index, e)| {
            let (ic, icir) = trailing(&cache.daily_ic[index], rows.clone());
            (ic > cfg.min_ic && icir > cfg.min_icir).then_some(Selected { index, id: e.id, ic, icir })
        })
        .collect();
    picked.sort_by(|a, b| b.ic.total_cmp(&a.ic).then(a.id.cmp(&b.id)));
    picked.truncate(cfg.max_factors);
    picked
}

/// Ridge fit with an unpenalized intercept. Returns (weights, intercept,
/// used the minimum-norm fallback).
pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> (DVector<f64>, f64, bool) {
    let (m, k) = x.shape();
    let means = DVector::from_iterator(k, (0..k).map(|j| x.column(j).mean()));
    let ybar = y.mean();
    let mut xc = x.clone();
    for j in 0..k {
        xc.column_mut(j).add_scalar_mut(-means[j]);
    }
    let yc = y.add_scalar(-ybar);
    let scale = 1.0 / m as f64;
    let mut a = xc.tr_mul(&xc) * scale;
    for j in 0..k {
        a[(j, j)] += ridge;
    }
    let b = xc.tr_mul(&yc) * scale;
    let (w, fallback) = match a.clone().cholesky() {
        Some(ch) if ridge > 0.0 || a.rank(1e-10) == k => (ch.solve(&b), false),
        _ => {
            let svd = a.svd(true, true);
            (svd.solve(&b, 1e-10).expect("both factors computed"), true)
        }
    };
    let intercept = ybar - means.dot(&w);
    (w, intercept, fallback)
}

fn design(cache: &CombinerCache<'_>, sel: &[Selected], rows: Range<usize>) -> (DMatrix<f64>, DVector<f64>) {
    let n = cache.panel.n_stocks();
    let mut data = Vec::new();
    let mut target = Vec::new();
    for t in rows {
        for i in 0..n {
            let y = cache.label_z[[t, i]];
            if y.is_nan() {
                continue;
            }
            let row: Vec<f64> = sel.iter().map(|s| cache.zscores[s.index][[t, i]]).collect();
            if row.iter().any(|v| v.is_nan()) {
                continue;
            }
            data.extend(row);
            target.push(y);
        }
    }
    let k = sel.len();
    (DMatrix::from_row_slice(target.len(), k, &data), DVector::from_vec(target))
}

/// Prediction for day `t` plus its snapshot; empty selection or an empty
/// design gives an all-missing prediction.
pub fn fit_predict_day(
    t: usize,
    selection: &[Selected],
    cache: &CombinerCache<'_>,
    cfg: &CombinerConfig,
) -> (Array1<f64>, MegaAlphaSnapshot) {
    let n = cache.panel.n_stocks();
    let date = cache.panel.dates()[t];
    let empty = MegaAlphaSnapshot { date, entries: Vec::new(), intercept: 0.0, min_norm: false };
    if selection.is_empty() {
        return (Array1::from_elem(n, f64::NAN), empty);
    }
    let (x, y) = design(cache, selection, cfg.window_rows(t));
    if x.nrows() < 2 {
        return (Array1::from_elem(n, f64::NAN), empty);
    }
    let (w, intercept, min_norm) = ridge_fit(&x, &y, cfg.ridge);
    let pred = Array1::from_shape_fn(n, |i| {
        let mut s = intercept;
        for (j, sel) in selection.iter().enumerate() {
            s += w[j] * cache.zscores[sel.index][[t, i]];
        }
        s
    });
    let entries = selection
        .iter()
        .zip(w.iter())
        .map(|(s, &weight)| SnapshotEntry {
            id: s.id,
            expr: cache.zoo.entries()[s.index].text.clone(),
            weight,
            ic: s.ic,
            icir: s.icir,
        })
        .collect();
    (pred, MegaAlphaSnapshot { date, entries, intercept, min_norm })
}

#[derive(Clone, Debug)]
pub struct Combination {
    /// Dates × stocks; missing outside the requested rows.
    pub predictions: Array2<f64>,
    pub snapshots: Vec<MegaAlphaSnapshot>,
    pub rows: Range<usize>,
}

impl Combination {
    /// Mean daily IC of the predictions against the panel label over `rows`.
    pub fn ic(&self, panel: &PanelData) -> f64 {
        factor_metrics(&self.predictions.view(), &panel.label().view(), self.rows.clone()).ic
    }
}

pub fn run_combination(
    zoo: &FactorZoo,
    panel: &PanelData,
    range: &DateRange,
    cfg: &CombinerConfig,
) -> Result<Combination, DataError> {
    let rows = panel.rows(range)?;
    Ok(run_combination_rows(zoo, panel, rows, cfg))
}

pub fn run_combination_rows(zoo: &FactorZoo, panel: &PanelData, rows: Range<usize>, cfg: &CombinerConfig) -> Combination {
    let cache = CombinerCache::new(zoo, panel);
    combine_with(&cache, rows, cfg)
}

pub fn combine_with(cache: &CombinerCache<'_>, rows: Range<usize>, cfg: &CombinerConfig) -> Combination {
    let days: Vec<(Array1<f64>, MegaAlphaSnapshot)> = rows
        .clone()
        .into_par_iter()
        .map(|t| fit_predict_day(t, &select_factors_at(t, cache, cfg), cache, cfg))
        .collect();
    let mut predictions = Array2::from_elem((cache.panel.n_days(), cache.panel.n_stocks()), f64::NAN);
    let mut snapshots = Vec::with_capacity(days.len());
    for (t, (p, s)) in rows.clone().zip(days) {
        predictions.row_mut(t).assign(&p);
        snapshots.push(s);
    }
    Combination { predictions, snapshots, rows }
}

/// Fixed-weight baseline: select and fit once on `fit_rows`, then apply the
/// same weights to every day of `rows`.
pub fn run_static_combination(
    zoo: &FactorZoo,
    panel: &PanelData,
    fit_rows: Range<usize>,
    rows: Range<usize>,
    cfg: &CombinerConfig,
) -> Combination {
    let cache = CombinerCache::new(zoo, panel);
    let mut sel: Vec<Selected> = zoo
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(index, e)| {
            let (ic, icir) = trailing(&cache.daily_ic[index], fit_rows.clone());
            (ic > cfg.min_ic && icir > cfg.min_icir).then_some(Selected { index, id: e.id, ic, icir })
        })
        .collect();
    sel.sort_by(|a, b| b.ic.total_cmp(&a.ic).then(a.id.cmp(&b.id)));
    sel.truncate(cfg.max_factors);
    let mut predictions = Array2::from_elem((panel.n_days(), panel.n_stocks()), f64::NAN);
    let mut snapshots = Vec::new();
    let (x, y) = design(&cache, &sel, fit_rows);
    let fitted = (!sel.is_empty() && x.nrows() >= 2).then(|| ridge_fit(&x, &y, cfg.ridge));
    for t in rows.clone() {
        let date = panel.dates()[t];
        match &fitted {
            Some((w, intercept, min_norm)) => {
                for i in 0..panel.n_stocks() {
                    let mut s = *intercept;
                    for (j, sl) in sel.iter().enumerate() {
                        s += w[j] * cache.zscores[sl.index][[t, i]];
                    }
                    predictions[[t, i]] = s;
                }
                let entries = sel
                    .iter()
                    .zip(w.iter())
                    .map(|(s, &weight)| SnapshotEntry {
                        id: s.id,
                        expr: zoo.entries()[s.index].text.clone(),
                        weight,
                        ic: s.ic,
                        icir: s.icir,
                    })
                    .collect();
                snapshots.push(MegaAlphaSnapshot { date, entries, intercept: *intercept, min_norm: *min_norm });
            }
            None => snapshots.push(MegaAlphaSnapshot { date, entries: Vec::new(), intercept: 0.0, min_norm: false }),
        }
    }
    Combination { predictions, snapshots, rows }
}

/// Out-of-window IC of the dynamic combination for each pool size `N`.
pub fn pool_size_sweep(
    zoo: &FactorZoo,
    panel: &PanelData,
    rows: Range<usize>,
    cfg: &CombinerConfig,
    sizes: &[usize],
) -> Vec<(usize, f64)> {
    let cache = CombinerCache::new(zoo, panel);
    sizes
        .iter()
        .map(|&n| {
            let c = combine_with(&cache, rows.clone(), &CombinerConfig { max_factors: n, ..*cfg });
            (n, c.ic(panel))
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_snapshots(snapshots: &[MegaAlphaSnapshot], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in snapshots {
        serde_json::to_writer(&mut w, &JsonSnapshot::from(s))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

// JSON has no NaN; undefined diagnostics are written as null
#[derive(Serialize)]
struct JsonSnapshot<'a> {
    date: NaiveDate,
    entries: Vec<JsonEntry<'a>>,
    intercept: f64,
    min_norm: bool,
}

#[derive(Serialize)]
struct JsonEntry<'a> {
    id: usize,
    expr: &'a str,
    weight: f64,
    ic: Option<f64>,
    icir: Option<f64>,
}

impl<'a> From<&'a MegaAlphaSnapshot> for JsonSnapshot<'a> {
    fn from(s: &'a MegaAlphaSnapshot) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        JsonSnapshot {
            date: s.date,
            entries: s
                .entries
                .iter()
                .map(|e| JsonEntry { id: e.id, expr: &e.expr, weight: e.weight, ic: finite(e.ic), icir: finite(e.icir) })
                .collect(),
            intercept: s.intercept,
            min_norm: s.min_norm,
        }
    }
}

/// `date,symbol,score` for every day in `rows`; missing scores are empty.
pub fn write_predictions(
    panel: &PanelData,
    predictions: &ArrayView2<f64>,
    rows: Range<usize>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "symbol", "score"])?;
    for t in rows {
        let date = panel.dates()[t].to_string();
        for (i, sym) in panel.symbols().iter().enumerate() {
            w.write_record([date.as_str(), sym.as_str(), &fmt_num(predictions[[t, i]])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a predictions file onto the panel's axes. Rows for unknown dates
/// or symbols are errors; cells not mentioned stay missing.
pub fn read_predictions(panel: &PanelData, path: impl AsRef<Path>) -> Result<Array2<f64>, DataError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Array2::from_elem((panel.n_days(), panel.n_stocks()), f64::NAN);
    let sym_index: std::collections::HashMap<&str, usize> =
        panel.symbols().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k as u64 + 2, |p| p.line());
        let bad = |message: String| DataError::Parse { line, message };
        if rec.len() < 3 {
            return Err(bad("expected date,symbol,score".into()));
        }
        let date: NaiveDate = rec[0].parse().map_err(|e| bad(format!("bad date `{}`: {e}", &rec[0])))?;
        let t = panel.date_index(date).ok_or_else(|| bad(format!("date {date} is not in the panel")))?;
        let i = *sym_index.get(&rec[1]).ok_or_else(|| bad(format!("symbol {} is not in the panel", &rec[1])))?;
        let v = &rec[2];
        out[[t, i]] = if v.is_empty() || v.eq_ignore_ascii_case("nan") {
            f64::NAN
        } else {
            v.parse().map_err(|e| bad(format!("bad score `{v}`: {e}")))?
        };
    }
    Ok(out)
}
