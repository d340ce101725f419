//! IC, RankIC, ICIR, zoo correlation ψ and the correlation-gated fitness.

use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dsl::{from_onehot, program_from_indices, Expr, Vocabulary};
use crate::eval::Evaluator;
use crate::zoo::FactorZoo;

pub const MIN_JOINT_OBS: usize = 3;
pub const STD_EPS: f64 = 1e-9;

/// Pearson correlation over the pairs where both sides are present.
/// Fewer than three pairs or a flat side gives NaN.
pub fn pearson<'a>(x: impl IntoIterator<Item = &'a f64>, y: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&a, &b) in x.into_iter().zip(y) {
        if !a.is_nan() && !b.is_nan() {
            xs.push(a);
            ys.push(b);
        }
    }
    pearson_dense(&xs, &ys)
}

fn pearson_dense(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < MIN_JOINT_OBS {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(ys) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx / n as f64).sqrt() < STD_EPS || (syy / n as f64).sqrt() < STD_EPS {
        return f64::NAN;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman-style correlation: Pearson of within-day average ranks of the
/// jointly present pairs.
pub fn rank_pearson<'a>(x: impl IntoIterator<Item = &'a f64>, y: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&a, &b) in x.into_iter().zip(y) {
        if !a.is_nan() && !b.is_nan() {
            xs.push(a);
            ys.push(b);
        }
    }
    if xs.len() < MIN_JOINT_OBS {
        return f64::NAN;
    }
    pearson_dense(&average_ranks(&xs), &average_ranks(&ys))
}

/// Cross-sectional Pearson correlation for every day.
pub fn daily_ic_series(values: &ArrayView2<f64>, label: &ArrayView2<f64>) -> Vec<f64> {
    assert_eq!(values.dim(), label.dim(), "factor and label shapes differ");
    values
        .axis_iter(Axis(0))
        .zip(label.axis_iter(Axis(0)))
        .map(|(v, y)| pearson(v.iter(), y.iter()))
        .collect()
}

pub fn daily_rank_ic_series(values: &ArrayView2<f64>, label: &ArrayView2<f64>) -> Vec<f64> {
    assert_eq!(values.dim(), label.dim(), "factor and label shapes differ");
    values
        .axis_iter(Axis(0))
        .zip(label.axis_iter(Axis(0)))
        .map(|(v, y)| rank_pearson(v.iter(), y.iter()))
        .collect()
}

/// Mean and sample standard deviation of the defined entries.
pub fn mean_and_std(series: &[f64]) -> (f64, f64) {
    let defined: Vec<f64> = series.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = defined.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `mean / std`, missing when the deviation is undefined or below 1e-9.
pub fn information_ratio(series: &[f64]) -> f64 {
    let (m, s) = mean_and_std(series);
    if s.is_nan() || s < STD_EPS {
        f64::NAN
    } else {
        m / s
    }
}

/// ICIR as seen by the stability gates. A series without dispersion but
/// with a non-zero mean is infinitely stable, signed by the mean.
pub fn gate_icir(series: &[f64]) -> f64 {
    let (m, s) = mean_and_std(series);
    if !s.is_nan() && s < STD_EPS && m.abs() >= STD_EPS {
        m.signum() * f64::INFINITY
    } else {
        information_ratio(series)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorMetrics {
    pub ic: f64,
    pub rank_ic: f64,
    pub icir: f64,
    pub rank_icir: f64,
    /// Daily IC for every panel day; NaN outside `rows` and on undefined days.
    pub daily_ic: Vec<f64>,
    pub rows: Range<usize>,
}

impl FactorMetrics {
    pub fn is_defined(&self) -> bool {
        !self.ic.is_nan()
    }
}

pub fn factor_metrics(values: &ArrayView2<f64>, label: &ArrayView2<f64>, rows: Range<usize>) -> FactorMetrics {
    let v = values.slice(ndarray::s![rows.clone(), ..]);
    let y = label.slice(ndarray::s![rows.clone(), ..]);
    let ic_in = daily_ic_series(&v, &y);
    let rank_in = daily_rank_ic_series(&v, &y);
    let (ic, _) = mean_and_std(&ic_in);
    let (rank_ic, _) = mean_and_std(&rank_in);
    let mut daily_ic = vec![f64::NAN; values.nrows()];
    daily_ic[rows.clone()].copy_from_slice(&ic_in);
    FactorMetrics {
        ic,
        rank_ic,
        icir: information_ratio(&ic_in),
        rank_icir: information_ratio(&rank_in),
        daily_ic,
        rows,
    }
}

/// Mean over `rows` of the daily cross-sectional correlation of two factors;
/// 0 when no day is defined.
pub fn mean_daily_correlation(a: &ArrayView2<f64>, b: &ArrayView2<f64>, rows: Range<usize>) -> f64 {
    let a = a.slice(ndarray::s![rows.clone(), ..]);
    let b = b.slice(ndarray::s![rows, ..]);
    let (m, _) = mean_and_std(&daily_ic_series(&a, &b));
    if m.is_nan() {
        0.0
    } else {
        m
    }
}

/// Largest absolute mean daily correlation with any member; 0 for no members.
pub fn psi<'a>(
    values: &ArrayView2<f64>,
    members: impl IntoIterator<Item = ArrayView2<'a, f64>>,
    rows: Range<usize>,
) -> f64 {
    members
        .into_iter()
        .map(|m| mean_daily_correlation(values, &m, rows.clone()).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    /// CORR'; candidates at or above this ψ score zero.
    pub corr_cap: f64,
    pub min_ic: f64,
    pub min_icir: f64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig { corr_cap: 0.7, min_ic: 0.03, min_icir: 0.1 }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.corr_cap > 0.0 && self.corr_cap <= 1.0) {
            errs.push(format!("fitness.corr_cap must be in (0, 1], got {}", self.corr_cap));
        }
        if !(self.min_ic >= 0.0) {
            errs.push(format!("fitness.min_ic must be non-negative, got {}", self.min_ic));
        }
        if !(self.min_icir >= 0.0) {
            errs.push(format!("fitness.min_icir must be non-negative, got {}", self.min_icir));
        }
        errs
    }
}

/// Panel, label and the day span that fitness and metrics are measured on.
pub struct EvalContext<'a> {
    pub evaluator: Evaluator<'a>,
    pub rows: Range<usize>,
}

impl<'a> EvalContext<'a> {
    pub fn new(panel: &'a crate::dataset::PanelData, rows: Range<usize>) -> EvalContext<'a> {
        EvalContext { evaluator: Evaluator::new(panel), rows }
    }

    pub fn label(&self) -> &'a Array2<f64> {
        self.evaluator.panel().label()
    }

    pub fn assess(&self, expr: &Expr) -> Candidate {
        let values = self.evaluator.values(expr);
        let metrics = factor_metrics(&values.view(), &self.label().view(), self.rows.clone());
        Candidate { expr: expr.clone(), text: expr.to_string(), values, metrics }
    }
}

/// An evaluated formula awaiting qualification.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub expr: Expr,
    pub text: String,
    pub values: Array2<f64>,
    pub metrics: FactorMetrics,
}

/// |IC| when the candidate is not too close to the zoo, else 0.
pub fn candidate_fitness(c: &Candidate, zoo: &FactorZoo, rows: Range<usize>, cfg: &FitnessConfig) -> f64 {
    if !c.metrics.is_defined() {
        return 0.0;
    }
    if !zoo.is_empty() && zoo.psi(&c.values.view(), rows) >= cfg.corr_cap {
        return 0.0;
    }
    c.metrics.ic.abs()
}

/// Fitness π of a one-hot (or any real `D × S`) matrix: 0 when it does not
/// decode, 0 when ψ ≥ CORR', otherwise |IC| over the context rows.
pub fn fitness_pi(
    x: &ArrayView2<f64>,
    vocab: &Vocabulary,
    zoo: &FactorZoo,
    ctx: &EvalContext<'_>,
    cfg: &FitnessConfig,
) -> f64 {
    match from_onehot(x, vocab) {
        Ok(prog) => candidate_fitness(&ctx.assess(&prog.decode()), zoo, ctx.rows.clone(), cfg),
        Err(_) => 0.0,
    }
}

/// Same as [`fitness_pi`] for a matrix given by its per-column row indices.
pub fn fitness_of_indices(
    idx: &[usize],
    vocab: &Vocabulary,
    zoo: &FactorZoo,
    ctx: &EvalContext<'_>,
    cfg: &FitnessConfig,
) -> f64 {
    match program_from_indices(idx, vocab, idx.len()) {
        Ok(prog) => candidate_fitness(&ctx.assess(&prog.decode()), zoo, ctx.rows.clone(), cfg),
        Err(_) => 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rejection {
    Duplicate,
    Undefined,
    WeakIc,
    Unstable,
    Correlated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qualification {
    pub accepted: bool,
    /// +1 or −1; the stored factor is `sign · f`.
    pub sign: f64,
    pub psi: f64,
    pub rejection: Option<Rejection>,
}

/// Zoo admission gate: |IC| ≥ min_ic, |ICIR| ≥ min_icir, ψ < CORR' and a
/// normalized expression not already present.
pub fn qualify(c: &Candidate, zoo: &FactorZoo, rows: Range<usize>, cfg: &FitnessConfig) -> Qualification {
    qualify_with(c, zoo, cfg, || zoo.psi(&c.values.view(), rows))
}

/// [`qualify`] with ψ supplied by the caller, computed only if the cheaper
/// checks pass.
pub fn qualify_with(c: &Candidate, zoo: &FactorZoo, cfg: &FitnessConfig, psi: impl FnOnce() -> f64) -> Qualification {
    let reject = |r: Rejection, psi: f64| Qualification { accepted: false, sign: 1.0, psi, rejection: Some(r) };
    if zoo.contains_expr(&c.text) {
        return reject(Rejection::Duplicate, f64::NAN);
    }
    let m = &c.metrics;
    let icir = gate_icir(&m.daily_ic[m.rows.clone()]);
    if m.ic.is_nan() || icir.is_nan() {
        return reject(Rejection::Undefined, f64::NAN);
    }
    if m.ic.abs() < cfg.min_ic {
        return reject(Rejection::WeakIc, f64::NAN);
    }
    if icir.abs() < cfg.min_icir {
        return reject(Rejection::Unstable, f64::NAN);
    }
    let psi = psi();
    if psi >= cfg.corr_cap {
        return reject(Rejection::Correlated, psi);
    }
    Qualification { accepted: true, sign: if m.ic < 0.0 { -1.0 } else { 1.0 }, psi, rejection: None }
}
