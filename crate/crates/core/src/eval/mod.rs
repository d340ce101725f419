//! Evaluates a formula over a panel into a dates × stocks factor matrix.
//!
//! Element semantics (NaN marks missing and propagates):
//!
//! | op | value |
//! |----|-------|
//! | `Abs`, `Neg` | `|x|`, `-x` |
//! | `S_log1p` | `sign(x)·ln(1+|x|)` |
//! | `Inv` | `1/x`, missing when `|x| < 1e-9` |
//! | `Div` | `a/b`, missing when `|b| < 1e-9` |
//! | `Pow` | `sign(a)·|a|^b`, missing when non-finite or `|·| > 1e12` |
//!
//! Rolling operators look at the trailing window ending at (and including)
//! day `t`, per stock. Any non-finite intermediate becomes missing.

pub mod rolling;

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::dataset::PanelData;
use crate::dsl::{parse_text, BinaryOp, DslError, Expr, Feature, UnaryOp};

pub const DIV_EPS: f64 = 1e-9;
pub const POW_LIMIT: f64 = 1e12;

/// Factor values `v_t = f(X)` for every day, with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrix {
    pub values: Array2<f64>,
    pub expr: String,
    pub panel_id: String,
}

impl FactorMatrix {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else if x == 0.0 {
        0.0
    } else {
        f64::NAN
    }
}

fn clean(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

pub fn apply_unary(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Abs => x.abs(),
        UnaryOp::Neg => -x,
        UnaryOp::SLog1p => clean(sign(x) * x.abs().ln_1p()),
        UnaryOp::Inv => {
            if x.abs() < DIV_EPS {
                f64::NAN
            } else {
                clean(1.0 / x)
            }
        }
    }
}

pub fn apply_binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => clean(a + b),
        BinaryOp::Sub => clean(a - b),
        BinaryOp::Mul => clean(a * b),
        BinaryOp::Div => {
            if b.abs() < DIV_EPS {
                f64::NAN
            } else {
                clean(a / b)
            }
        }
        BinaryOp::Pow => {
            let v = sign(a) * a.abs().powf(b);
            if v.is_finite() && v.abs() <= POW_LIMIT {
                v
            } else {
                f64::NAN
            }
        }
    }
}

/// Reusable evaluation context holding stock-major copies of the features.
pub struct Evaluator<'a> {
    panel: &'a PanelData,
    // n_stocks × n_days, standard layout so each stock's series is contiguous
    series: [Array2<f64>; 6],
}

impl<'a> Evaluator<'a> {
    pub fn new(panel: &'a PanelData) -> Evaluator<'a> {
        let series = std::array::from_fn(|k| panel.features()[k].t().as_standard_layout().to_owned());
        Evaluator { panel, series }
    }

    pub fn panel(&self) -> &'a PanelData {
        self.panel
    }

    /// Dates × stocks values of `expr`.
    pub fn values(&self, expr: &Expr) -> Array2<f64> {
        self.eval_stock_major(expr).t().as_standard_layout().to_owned()
    }

    pub fn evaluate(&self, expr: &Expr) -> FactorMatrix {
        FactorMatrix {
            values: self.values(expr),
            expr: expr.to_string(),
            panel_id: self.panel.id().to_string(),
        }
    }

    fn leaf(&self, f: Feature) -> Array2<f64> {
        self.series[f.index()].clone()
    }

    fn eval_stock_major(&self, expr: &Expr) -> Array2<f64> {
        let shape = (self.panel.n_stocks(), self.panel.n_days());
        match expr {
            Expr::Feature(f) => self.leaf(*f),
            Expr::Constant(c) => Array2::from_elem(shape, *c),
            Expr::Unary(op, x) => {
                let mut v = self.eval_stock_major(x);
                v.mapv_inplace(|x| apply_unary(*op, x));
                v
            }
            Expr::Binary(op, a, b) => {
                let mut va = self.eval_stock_major(a);
                let vb = self.eval_stock_major(b);
                Zip::from(&mut va).and(&vb).for_each(|x, &y| *x = apply_binary(*op, *x, y));
                va
            }
            Expr::Rolling(op, x, w) => {
                let vx = self.eval_stock_major(x);
                let mut out = Array2::zeros(shape);
                for (src, mut dst) in vx.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
                    rolling::rolling(
                        *op,
                        src.as_slice().expect("contiguous row"),
                        *w,
                        dst.as_slice_mut().expect("contiguous row"),
                    );
                }
                out
            }
            Expr::PairRolling(op, a, b, w) => {
                let va = self.eval_stock_major(a);
                let vb = self.eval_stock_major(b);
                let mut out = Array2::zeros(shape);
                for ((ra, rb), mut dst) in va
                    .axis_iter(Axis(0))
                    .zip(vb.axis_iter(Axis(0)))
                    .zip(out.axis_iter_mut(Axis(0)))
                {
                    rolling::pair_rolling(
                        *op,
                        ra.as_slice().expect("contiguous row"),
                        rb.as_slice().expect("contiguous row"),
                        *w,
                        dst.as_slice_mut().expect("contiguous row"),
                    );
                }
                out
            }
        }
    }
}

pub fn evaluate(expr: &Expr, panel: &PanelData) -> FactorMatrix {
    Evaluator::new(panel).evaluate(expr)
}

pub fn evaluate_text(source: &str, panel: &PanelData) -> Result<FactorMatrix, DslError> {
    Ok(evaluate(&parse_text(source)?, panel))
}

/// Per-day z-score over the non-missing stocks, using the population
/// standard deviation; days whose deviation is below 1e-9 become missing.
pub fn cross_sectional_zscore(values: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = values.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let (mut n, mut sum) = (0usize, 0.0);
        for &v in row.iter() {
            if !v.is_nan() {
                n += 1;
                sum += v;
            }
        }
        if n == 0 {
            continue;
        }
        let mean = sum / n as f64;
        let var = row.iter().filter(|v| !v.is_nan()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if !(std >= rolling::STD_EPS) {
            row.fill(f64::NAN);
            continue;
        }
        row.mapv_inplace(|v| (v - mean) / std);
    }
    out
}
