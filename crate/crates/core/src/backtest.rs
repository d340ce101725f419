//! Top-k equal-weight simulation with a cap on daily replacements.
//!
//! Scores on day `t` decide the book, orders fill at day `t+1`'s execution
//! price, and the day's return runs from `t+1` to `t+2`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataError, PanelData};
use crate::dsl::Feature;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub top_k: usize,
    /// Sell/buy pairs allowed per day after the first.
    pub max_changes: usize,
    /// Cost per unit of turnover fraction, in basis points.
    pub cost_bps: f64,
    pub price: Feature,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig { top_k: 50, max_changes: 5, cost_bps: 0.0, price: Feature::Vwap }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.top_k == 0 {
            errs.push("backtest.top_k must be at least 1".to_string());
        }
        if !(self.cost_bps >= 0.0 && self.cost_bps.is_finite()) {
            errs.push(format!("backtest.cost_bps must be non-negative, got {}", self.cost_bps));
        }
        if !self.price.is_price() {
            errs.push(format!("backtest.price must be a price field, got {}", self.price.name()));
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestResult {
    /// Decision dates.
    pub dates: Vec<NaiveDate>,
    /// Held stock indices (ascending) after each day's trades.
    pub holdings: Vec<Vec<usize>>,
    pub returns: Vec<f64>,
    pub benchmark: Vec<f64>,
    /// Names replaced that day.
    pub turnover: Vec<usize>,
    pub cum_return: Vec<f64>,
    pub excess: Vec<f64>,
    /// Held positions carried at zero return for lack of a price.
    pub missing_prices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub days: usize,
    pub total_return: f64,
    pub benchmark_return: f64,
    pub excess_return: f64,
    pub annualized_return: f64,
    pub sharpe: f64,
    pub max_drawdown: f64,
}

impl BacktestResult {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn summary(&self) -> BacktestSummary {
        let n = self.returns.len();
        let total = self.cum_return.last().copied().unwrap_or(0.0);
        let bench = self.benchmark.iter().fold(1.0, |a, r| a * (1.0 + r)) - 1.0;
        let mean = self.returns.iter().sum::<f64>() / n.max(1) as f64;
        let sd = if n > 1 {
            (self.returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        let mut peak: f64 = 1.0;
        let mut mdd: f64 = 0.0;
        for c in &self.cum_return {
            peak = peak.max(1.0 + c);
            mdd = mdd.max(1.0 - (1.0 + c) / peak);
        }
        BacktestSummary {
            days: n,
            total_return: total,
            benchmark_return: bench,
            excess_return: total - bench,
            annualized_return: if n > 0 { (1.0 + total).powf(252.0 / n as f64) - 1.0 } else { 0.0 },
            sharpe: if sd > 0.0 { mean / sd * 252f64.sqrt() } else { f64::NAN },
            max_drawdown: mdd,
        }
    }
}

/// Stock indices with a score, best first; ties by symbol.
fn ranking(scores: &[f64], symbols: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| !scores[i].is_nan()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| symbols[a].cmp(&symbols[b])));
    idx
}

/// Equal-weight mean of next-period returns; a missing price counts as zero.
fn basket_return(set: impl IntoIterator<Item = usize>, price: &ArrayView2<f64>, t: usize) -> (f64, usize) {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for i in set {
        let (a, b) = (price[[t + 1, i]], price[[t + 2, i]]);
        n += 1;
        if a.is_nan() || b.is_nan() {
            missing += 1;
        } else {
            sum += b / a - 1.0;
        }
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, missing)
}

/// Simulates decision days in `rows` that have two following days of prices.
pub fn run_backtest(
    scores: &ArrayView2<f64>,
    panel: &PanelData,
    rows: Range<usize>,
    cfg: &BacktestConfig,
) -> Result<BacktestResult, DataError> {
    if scores.dim() != (panel.n_days(), panel.n_stocks()) {
        return Err(DataError::Invalid(format!(
            "scores have shape {:?}, panel is {:?}",
            scores.dim(),
            (panel.n_days(), panel.n_stocks())
        )));
    }
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(DataError::Invalid(errs.join("; ")));
    }
    let price = panel.feature(cfg.price).view();
    let symbols = panel.symbols();
    let last = rows.end.min(panel.n_days().saturating_sub(2));
    let mut res = BacktestResult {
        dates: Vec::new(),
        holdings: Vec::new(),
        returns: Vec::new(),
        benchmark: Vec::new(),
        turnover: Vec::new(),
        cum_return: Vec::new(),
        excess: Vec::new(),
        missing_prices: Vec::new(),
    };
    let mut held: BTreeSet<usize> = BTreeSet::new();
    let mut wealth = 1.0;
    for t in rows.start..last {
        let day: Vec<f64> = scores.row(t).to_vec();
        let rank = ranking(&day, symbols);
        let mut pos = vec![usize::MAX; day.len()];
        for (r, &i) in rank.iter().enumerate() {
            pos[i] = r;
        }
        let top: BTreeSet<usize> = rank.iter().take(cfg.top_k).copied().collect();
        // worst first; unscored names rank below all scored ones
        let mut sells: Vec<usize> = held.iter().copied().filter(|i| !top.contains(i)).collect();
        sells.sort_by(|&a, &b| pos[b].cmp(&pos[a]).then_with(|| symbols[b].cmp(&symbols[a])));
        let buys: Vec<usize> = rank.iter().take(cfg.top_k).copied().filter(|i| !held.contains(i)).collect();
        let mut buys = buys.into_iter();
        let n = cfg.max_changes.min(sells.len());
        let mut replaced = 0;
        for &s in &sells[..n] {
            let Some(b) = buys.next() else { break };
            held.remove(&s);
            held.insert(b);
            replaced += 1;
        }
        // open slots (the first day, or too few scored names earlier) fill freely
        for b in buys {
            if held.len() >= cfg.top_k {
                break;
            }
            held.insert(b);
        }
        let (gross, missing) = basket_return(held.iter().copied(), &price, t);
        let frac = if held.is_empty() { 0.0 } else { replaced as f64 / held.len() as f64 };
        let r = gross - cfg.cost_bps * 1e-4 * frac;
        let (bench, _) = basket_return(0..panel.n_stocks(), &price, t);
        wealth *= 1.0 + r;
        res.dates.push(panel.dates()[t]);
        res.holdings.push(held.iter().copied().collect());
        res.returns.push(r);
        res.benchmark.push(bench);
        res.turnover.push(replaced);
        res.cum_return.push(wealth - 1.0);
        res.excess.push(r - bench);
        res.missing_prices.push(missing);
    }
    Ok(res)
}

/// `date,return,cum_return,turnover,excess_return`.
pub fn write_result_csv(res: &BacktestResult, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "return", "cum_return", "turnover", "excess_return"])?;
    for k in 0..res.len() {
        w.write_record([
            res.dates[k].to_string(),
            res.returns[k].to_string(),
            res.cum_return[k].to_string(),
            res.turnover[k].to_string(),
            res.excess[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cumulative return of the strategy and the benchmark as an SVG line chart.
pub fn equity_svg(res: &BacktestResult) -> String {
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let bench: Vec<f64> = res
        .benchmark
        .iter()
        .scan(1.0, |acc, r| {
            *acc *= 1.0 + r;
            Some(*acc - 1.0)
        })
        .collect();
    let all = res.cum_return.iter().chain(&bench).copied();
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = res.len().max(2) as f64 - 1.0;
    let pts = |ys: &[f64]| {
        let mut s = String::new();
        for (k, y) in ys.iter().enumerate() {
            let x = pad + (w - 2.0 * pad) * k as f64 / n;
            let yy = h - pad - (h - 2.0 * pad) * (y - lo) / span;
            let _ = write!(s, "{x:.2},{yy:.2} ");
        }
        s
    };
    let zero = h - pad - (h - 2.0 * pad) * (0.0 - lo) / span;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r##"<line x1="{pad}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="#bbb"/>"##, w - pad);
    let _ = writeln!(svg, r##"<polyline fill="none" stroke="#999" stroke-width="1.5" points="{}"/>"##, pts(&bench));
    let _ = writeln!(svg, r##"<polyline fill="none" stroke="#c0392b" stroke-width="2" points="{}"/>"##, pts(&res.cum_return));
    if let (Some(a), Some(b)) = (res.dates.first(), res.dates.last()) {
        let _ = writeln!(svg, r#"<text x="{pad}" y="{}" font-size="12">{a}</text>"#, h - 12.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{b}</text>"#, w - pad, h - 12.0);
    }
    let _ = writeln!(svg, r#"<text x="{pad}" y="20" font-size="12">max {:.2}% min {:.2}% (red: strategy, grey: equal-weight universe)</text>"#, hi * 100.0, lo * 100.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny_panel;
    use ndarray::Array2;

    #[test]
    fn no_changes_freezes_book() {
        let p = tiny_panel(12, 6);
        let scores = Array2::from_shape_fn((12, 6), |(t, i)| ((t * 5 + i * 3) % 7) as f64);
        let cfg = BacktestConfig { top_k: 2, max_changes: 0, ..Default::default() };
        let r = run_backtest(&scores.view(), &p, 0..12, &cfg).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.holdings.windows(2).all(|w| w[0] == w[1]));
        assert!(r.turnover.iter().all(|&x| x == 0));
    }

    #[test]
    fn constant_scores_never_trade() {
        let p = tiny_panel(12, 6);
        let scores = Array2::from_elem((12, 6), 1.0);
        let cfg = BacktestConfig { top_k: 3, max_changes: 5, ..Default::default() };
        let r = run_backtest(&scores.view(), &p, 0..12, &cfg).unwrap();
        assert!(r.holdings.iter().all(|h| h == &vec![0, 1, 2]));
        assert!(r.turnover.iter().all(|&x| x == 0));
    }

    #[test]
    fn holding_everything_is_the_benchmark() {
        let p = tiny_panel(10, 4);
        let scores = Array2::from_shape_fn((10, 4), |(t, i)| (t + i) as f64);
        let cfg = BacktestConfig { top_k: 4, ..Default::default() };
        let r = run_backtest(&scores.view(), &p, 0..10, &cfg).unwrap();
        assert_eq!(r.returns, r.benchmark);
    }

    #[test]
    fn svg_has_two_lines() {
        let p = tiny_panel(10, 4);
        let scores = Array2::from_shape_fn((10, 4), |(t, i)| (t * i) as f64);
        let r = run_backtest(&scores.view(), &p, 0..10, &BacktestConfig { top_k: 2, ..Default::default() }).unwrap();
        assert_eq!(equity_svg(&r).matches("<polyline").count(), 2);
    }

    fn six_stock_panel(prices: Array2<f64>) -> PanelData {
        let (t, n) = prices.dim();
        let start = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
        let dates = (0..t).map(|i| start + chrono::Days::new(i as u64)).collect();
        let symbols = (0..n).map(|i| format!("S{i}")).collect();
        let vol = Array2::from_elem((t, n), 100.0);
        PanelData::new(
            "six",
            dates,
            symbols,
            [prices.clone(), prices.clone(), prices.clone(), prices.clone(), vol, prices],
            Array2::from_elem((t, n), f64::NAN),
        )
        .unwrap()
    }

    #[test]
    fn hand_simulated_six_stocks() {
        let prices = ndarray::array![
            [10.0, 10.0, 10.0, 10.0, 10.0, 10.0],
            [10.0, 20.0, 10.0, 10.0, 10.0, 10.0],
            [11.0, 20.0, 12.0, 10.0, 9.0, 10.0],
            [11.0, 22.0, 12.0, 15.0, 9.0, 10.0],
            [22.0, 22.0, 6.0, 15.0, 9.0, 20.0],
        ];
        let p = six_stock_panel(prices);
        let scores = ndarray::array![
            [0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            [5.0, 4.0, 0.0, 1.0, 2.0, 3.0],
            [5.0, 4.0, 0.0, 1.0, 2.0, 3.0],
            [0.0; 6],
            [0.0; 6],
        ];
        let cfg = BacktestConfig { top_k: 2, max_changes: 1, cost_bps: 10.0, ..Default::default() };
        let r = run_backtest(&scores.view(), &p, 0..5, &cfg).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.holdings, vec![vec![4, 5], vec![0, 5], vec![0, 1]]);
        assert_eq!(r.turnover, vec![0, 1, 1]);
        // day 0 return uses prices rows 1 -> 2
        assert!((r.returns[0] - (-0.1 + 0.0) / 2.0).abs() < 1e-12);
        assert!((r.returns[1] - ((0.0 + 0.0) / 2.0 - 10.0 * 1e-4 * 0.5)).abs() < 1e-12);
        assert!((r.returns[2] - ((1.0 + 0.0) / 2.0 - 10.0 * 1e-4 * 0.5)).abs() < 1e-12);
        let bench0 = (0.1 + 0.0 + 0.2 + 0.0 - 0.1 + 0.0) / 6.0;
        assert!((r.benchmark[0] - bench0).abs() < 1e-12);
        let cum = (1.0 + r.returns[0]) * (1.0 + r.returns[1]) * (1.0 + r.returns[2]) - 1.0;
        assert!((r.cum_return[2] - cum).abs() < 1e-12);
    }

    #[test]
    fn empty_book_fills_once_scores_appear() {
        let p = tiny_panel(8, 4);
        let mut scores = Array2::from_shape_fn((8, 4), |(_, i)| i as f64);
        scores.row_mut(0).fill(f64::NAN);
        scores[[1, 0]] = f64::NAN;
        scores[[1, 1]] = f64::NAN;
        scores[[1, 2]] = f64::NAN;
        let cfg = BacktestConfig { top_k: 2, max_changes: 0, ..Default::default() };
        let r = run_backtest(&scores.view(), &p, 0..8, &cfg).unwrap();
        assert_eq!(r.holdings[..3], [vec![], vec![3], vec![2, 3]]);
        assert_eq!(r.turnover, vec![0; 6]);
    }

    #[test]
    fn missing_price_counts_as_flat() {
        let mut prices = Array2::from_shape_fn((5, 3), |(t, i)| 10.0 + (t * (i + 1)) as f64);
        prices[[2, 0]] = f64::NAN;
        let p = six_stock_panel(prices);
        let scores = Array2::from_shape_fn((5, 3), |(_, i)| -(i as f64));
        let r = run_backtest(&scores.view(), &p, 0..5, &BacktestConfig { top_k: 1, ..Default::default() }).unwrap();
        assert_eq!(r.missing_prices[..2], [1, 1]);
        assert_eq!(r.returns[..2], [0.0, 0.0]);
    }

    #[test]
    fn monotone_transform_of_scores_is_irrelevant() {
        let p = tiny_panel(15, 7);
        let scores = Array2::from_shape_fn((15, 7), |(t, i)| (((t * 13 + i * 29) % 17) as f64 - 8.0) / 3.0);
        let cfg = BacktestConfig { top_k: 3, max_changes: 2, ..Default::default() };
        let a = run_backtest(&scores.view(), &p, 0..15, &cfg).unwrap();
        let b = run_backtest(&scores.mapv(|x| x.exp() * 4.0 - 1.0).view(), &p, 0..15, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
