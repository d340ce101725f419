//! Shared helpers for the integration tests: random panels, a scalar
//! reference interpreter, brute-force metric oracles and finite differences.
#![allow(dead_code)]

pub mod grad;

use alphaforge::dataset::PanelData;
use alphaforge::dsl::{BinaryOp, Expr, PairRollingOp, RollingOp, UnaryOp};
use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::Rng;

/// Random panel with positive prices, non-negative volume, a random label and
/// each cell missing with probability `missing`.
pub fn random_panel<R: Rng>(rng: &mut R, n_days: usize, n_stocks: usize, missing: f64) -> PanelData {
    let shape = (n_days, n_stocks);
    let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..n_days as u64).map(|k| start + Days::new(k)).collect();
    let symbols: Vec<String> = (0..n_stocks).map(|i| format!("X{i:02}")).collect();
    let mut price = Array2::zeros(shape);
    for i in 0..n_stocks {
        let mut p: f64 = rng.random_range(5.0..50.0);
        for t in 0..n_days {
            p *= (rng.random::<f64>() - 0.5).mul_add(0.06, 0.0).exp();
            price[[t, i]] = p;
        }
    }
    let jitter = |rng: &mut R, base: &Array2<f64>| base.mapv(|v| v * (1.0 + 0.02 * (rng.random::<f64>() - 0.5)));
    let open = jitter(rng, &price);
    let high = jitter(rng, &price).mapv(|v| v * 1.01);
    let low = jitter(rng, &price).mapv(|v| v * 0.99);
    let vwap = jitter(rng, &price);
    // a few exact repeats so flat windows and ties occur
    let volume = Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < 0.1 {
            1000.0
        } else {
            rng.random_range(0.0..5000.0)
        }
    });
    let label = Array2::from_shape_fn(shape, |_| rng.random::<f64>() - 0.5);
    let mut feats = [open, high, low, price, volume, vwap];
    for m in feats.iter_mut() {
        m.mapv_inplace(|v| if rng.random::<f64>() < missing { f64::NAN } else { v });
    }
    PanelData::new("random", dates, symbols, feats, label).unwrap()
}

fn fin(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn sgn(v: f64) -> f64 {
    if v.is_nan() {
        f64::NAN
    } else if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

fn unary(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Abs => x.abs(),
        UnaryOp::Neg => -x,
        UnaryOp::SLog1p => fin(sgn(x) * (1.0 + x.abs()).ln()),
        UnaryOp::Inv if x.abs() < 1e-9 => f64::NAN,
        UnaryOp::Inv => fin(1.0 / x),
    }
}

fn binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => fin(a + b),
        BinaryOp::Sub => fin(a - b),
        BinaryOp::Mul => fin(a * b),
        BinaryOp::Div if b.abs() < 1e-9 => f64::NAN,
        BinaryOp::Div => fin(a / b),
        BinaryOp::Pow => {
            let v = sgn(a) * a.abs().powf(b);
            if v.is_finite() && v.abs() <= 1e12 {
                v
            } else {
                f64::NAN
            }
        }
    }
}

fn window_stat(op: RollingOp, win: &[f64]) -> f64 {
    let n = win.len() as f64;
    let mean = win.iter().sum::<f64>() / n;
    let var = || {
        if win.len() < 2 {
            f64::NAN
        } else {
            win.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        }
    };
    match op {
        RollingOp::Sum => win.iter().sum(),
        RollingOp::Mean => mean,
        RollingOp::Var => var(),
        RollingOp::Std => var().sqrt(),
        RollingOp::Mad => win.iter().map(|v| (v - mean).abs()).sum::<f64>() / n,
        RollingOp::Min => win.iter().copied().fold(f64::INFINITY, f64::min),
        RollingOp::Max => win.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        RollingOp::Ref | RollingOp::Delta => unreachable!("point lookups"),
    }
}

fn pair_stat(op: PairRollingOp, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cab = 0.0;
    let mut caa = 0.0;
    let mut cbb = 0.0;
    for k in 0..a.len() {
        cab += (a[k] - ma) * (b[k] - mb);
        caa += (a[k] - ma) * (a[k] - ma);
        cbb += (b[k] - mb) * (b[k] - mb);
    }
    match op {
        PairRollingOp::Cov => fin(cab / (n - 1.0)),
        PairRollingOp::Corr => {
            if (caa / (n - 1.0)).sqrt() < 1e-9 || (cbb / (n - 1.0)).sqrt() < 1e-9 {
                f64::NAN
            } else {
                fin(cab / (caa.sqrt() * cbb.sqrt())).clamp(-1.0, 1.0)
            }
        }
    }
}

/// Scalar reference interpreter: every node is evaluated cell by cell, each
/// window gathered afresh.
pub fn reference_eval(expr: &Expr, panel: &PanelData) -> Array2<f64> {
    let (nt, ns) = (panel.n_days(), panel.n_stocks());
    match expr {
        Expr::Feature(f) => panel.feature(*f).clone(),
        Expr::Constant(c) => Array2::from_elem((nt, ns), *c),
        Expr::Unary(op, x) => reference_eval(x, panel).mapv(|v| unary(*op, v)),
        Expr::Binary(op, a, b) => {
            let (va, vb) = (reference_eval(a, panel), reference_eval(b, panel));
            Array2::from_shape_fn((nt, ns), |(t, i)| binary(*op, va[[t, i]], vb[[t, i]]))
        }
        Expr::Rolling(op, x, w) => {
            let v = reference_eval(x, panel);
            let w = *w;
            Array2::from_shape_fn((nt, ns), |(t, i)| match op {
                RollingOp::Ref => {
                    if t >= w {
                        v[[t - w, i]]
                    } else {
                        f64::NAN
                    }
                }
                RollingOp::Delta => {
                    if t >= w {
                        fin(v[[t, i]] - v[[t - w, i]])
                    } else {
                        f64::NAN
                    }
                }
                _ => {
                    if t + 1 < w {
                        return f64::NAN;
                    }
                    let win: Vec<f64> = (t + 1 - w..=t).map(|k| v[[k, i]]).collect();
                    if win.iter().any(|x| x.is_nan()) {
                        f64::NAN
                    } else {
                        fin(window_stat(*op, &win))
                    }
                }
            })
        }
        Expr::PairRolling(op, a, b, w) => {
            let (va, vb) = (reference_eval(a, panel), reference_eval(b, panel));
            let w = *w;
            Array2::from_shape_fn((nt, ns), |(t, i)| {
                if w < 2 || t + 1 < w {
                    return f64::NAN;
                }
                let xa: Vec<f64> = (t + 1 - w..=t).map(|k| va[[k, i]]).collect();
                let xb: Vec<f64> = (t + 1 - w..=t).map(|k| vb[[k, i]]).collect();
                if xa.iter().chain(&xb).any(|x| x.is_nan()) {
                    f64::NAN
                } else {
                    pair_stat(*op, &xa, &xb)
                }
            })
        }
    }
}

/// Largest absolute difference, or infinity when the missing patterns differ.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        match (x.is_nan(), y.is_nan()) {
            (true, true) => {}
            (false, false) => worst = worst.max((x - y).abs()),
            _ => return f64::INFINITY,
        }
    }
    worst
}

// ---- brute-force metric oracles ----

/// Pearson correlation as the mean product of population z-scores.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| !a.is_nan() && !b.is_nan()).map(|(a, b)| (*a, *b)).collect();
    let n = pairs.len();
    if n < 3 {
        return f64::NAN;
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sx = (pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / nf).sqrt();
    let sy = (pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / nf).sqrt();
    if sx < 1e-9 || sy < 1e-9 {
        return f64::NAN;
    }
    (pairs.iter().map(|p| (p.0 - mx) / sx * ((p.1 - my) / sy)).sum::<f64>() / nf).clamp(-1.0, 1.0)
}

/// Average rank by counting: 1 + #smaller + (#equal − 1) / 2.
pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_rank_pearson(x: &[f64], y: &[f64]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(a, b)| !a.is_nan() && !b.is_nan()).map(|(a, b)| (*a, *b)).unzip();
    if xs.len() < 3 {
        return f64::NAN;
    }
    oracle_pearson(&oracle_ranks(&xs), &oracle_ranks(&ys))
}

/// (IC, RankIC, ICIR) over `rows` by explicit day loops.
pub fn oracle_metrics(values: &Array2<f64>, label: &Array2<f64>, rows: std::ops::Range<usize>) -> (f64, f64, f64) {
    let mut ic = Vec::new();
    let mut ric = Vec::new();
    for t in rows {
        let v: Vec<f64> = values.row(t).to_vec();
        let y: Vec<f64> = label.row(t).to_vec();
        let a = oracle_pearson(&v, &y);
        if !a.is_nan() {
            ic.push(a);
        }
        let b = oracle_rank_pearson(&v, &y);
        if !b.is_nan() {
            ric.push(b);
        }
    }
    let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
    let m = mean(&ic);
    let icir = if ic.len() < 2 {
        f64::NAN
    } else {
        let sd = (ic.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ic.len() - 1) as f64).sqrt();
        if sd < 1e-9 {
            f64::NAN
        } else {
            m / sd
        }
    };
    (m, mean(&ric), icir)
}

/// ψ: largest |mean daily correlation| against any member (0 when none).
pub fn oracle_psi(values: &Array2<f64>, members: &[Array2<f64>], rows: std::ops::Range<usize>) -> f64 {
    let mut best: f64 = 0.0;
    for m in members {
        let days: Vec<f64> = rows
            .clone()
            .map(|t| oracle_pearson(&values.row(t).to_vec(), &m.row(t).to_vec()))
            .filter(|v| !v.is_nan())
            .collect();
        let c = if days.is_empty() { 0.0 } else { days.iter().sum::<f64>() / days.len() as f64 };
        best = best.max(c.abs());
    }
    best
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}

// ---- finite differences ----

/// Central-difference check of `grad` against `f` at `x` with step 1e-4.
/// An entry passes when within 1e-6 absolute or 1e-4 relative.
pub fn check_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> Result<(), String> {
    assert_eq!(x.len(), grad.len());
    let h = 1e-4;
    let mut p = x.to_vec();
    for k in 0..x.len() {
        p[k] = x[k] + h;
        let up = f(&p);
        p[k] = x[k] - h;
        let dn = f(&p);
        p[k] = x[k];
        let num = (up - dn) / (2.0 * h);
        let abs = (num - grad[k]).abs();
        let rel = abs / num.abs().max(grad[k].abs()).max(f64::MIN_POSITIVE);
        if abs > 1e-6 && rel > 1e-4 {
            return Err(format!("entry {k}: analytic {} numeric {num}", grad[k]));
        }
    }
    Ok(())
}

/// The six-stock case worked out by hand: scores, vwap and expected
/// holdings / turnover / portfolio returns for top 2, one change per day.
pub struct HandCase {
    pub scores: Array2<f64>,
    pub vwap: Array2<f64>,
    pub holdings: Vec<Vec<usize>>,
    pub turnover: Vec<usize>,
    pub returns: Vec<f64>,
}

pub fn six_stock_case() -> HandCase {
    let scores = ndarray::arr2(&[
        [0.1, 0.2, 0.3, 0.4, 0.6, 0.5],
        [0.9, 0.2, 0.8, 0.1, 0.0, 0.7],
        [0.9, 0.8, 0.1, 0.2, 0.3, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]);
    let vwap = ndarray::arr2(&[
        [10.0, 10.0, 10.0, 10.0, 10.0, 10.0],
        [10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
        [11.0, 20.0, 33.0, 40.0, 45.0, 66.0],
        [12.1, 22.0, 33.0, 44.0, 45.0, 66.0],
        [12.1, 22.0, 29.7, 44.0, 54.0, 59.4],
    ]);
    HandCase {
        scores,
        vwap,
        holdings: vec![vec![4, 5], vec![0, 5], vec![0, 1]],
        turnover: vec![0, 1, 1],
        // day 0 holds {4,5}: (45/50 − 1 + 66/60 − 1) / 2
        // day 1 holds {0,5}: (12.1/11 − 1 + 66/66 − 1) / 2
        // day 2 holds {0,1}: (12.1/12.1 − 1 + 22/22 − 1) / 2
        returns: vec![(-0.1 + 0.1) / 2.0, (0.1 + 0.0) / 2.0, 0.0],
    }
}

/// Random syntax tree of at most `depth` levels over the default menus.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    use alphaforge::dsl::{Feature, DEFAULT_CONSTANTS, DEFAULT_WINDOWS};
    let pick = |rng: &mut R, n: usize| rng.random_range(0..n);
    if depth == 0 || rng.random::<f64>() < 0.3 {
        return if rng.random::<f64>() < 0.75 {
            Expr::Feature(Feature::ALL[pick(rng, 6)])
        } else {
            Expr::Constant(DEFAULT_CONSTANTS[pick(rng, DEFAULT_CONSTANTS.len())])
        };
    }
    let w = DEFAULT_WINDOWS[pick(rng, DEFAULT_WINDOWS.len())];
    match pick(rng, 4) {
        0 => Expr::unary(UnaryOp::ALL[pick(rng, 4)], random_expr(rng, depth - 1)),
        1 => Expr::binary(BinaryOp::ALL[pick(rng, 5)], random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        2 => Expr::rolling(RollingOp::ALL[pick(rng, 9)], random_expr(rng, depth - 1), w),
        _ => Expr::pair_rolling(
            PairRollingOp::ALL[pick(rng, 2)],
            random_expr(rng, depth - 1),
            random_expr(rng, depth - 1),
            w,
        ),
    }
}

/// Panel whose every price field is `prices`, with flat volume and no label.
pub fn price_panel(prices: &Array2<f64>) -> PanelData {
    let (t, n) = prices.dim();
    let start = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    let dates = (0..t as u64).map(|k| start + Days::new(k)).collect();
    let symbols = (0..n).map(|i| format!("S{i}")).collect();
    let p = prices.clone();
    PanelData::new(
        "prices",
        dates,
        symbols,
        [p.clone(), p.clone(), p.clone(), p.clone(), Array2::from_elem((t, n), 100.0), p],
        Array2::from_elem((t, n), f64::NAN),
    )
    .unwrap()
}
