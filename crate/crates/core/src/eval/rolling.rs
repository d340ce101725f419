//! Trailing-window kernels over one stock's time series.
//!
//! Window statistics are recomputed from the raw values in each window
//! (two-pass mean then deviations) so large-magnitude inputs do not suffer
//! the cancellation of running-sum updates. A running count of missing
//! values lets fully-missing stretches skip the arithmetic. Min and max use a
//! monotonic deque.

use std::collections::VecDeque;

use crate::dsl::{PairRollingOp, RollingOp};

pub const STD_EPS: f64 = 1e-9;

fn finite_or_nan(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

/// Calls `f(t, window)` for every `t` whose trailing window of length `w`
/// lies inside the series and holds no missing value; other slots are NaN.
fn complete_windows(x: &[f64], w: usize, out: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) {
    out.iter_mut().for_each(|o| *o = f64::NAN);
    if w == 0 || w > x.len() {
        return;
    }
    let mut missing = x[..w - 1].iter().filter(|v| v.is_nan()).count();
    for t in w - 1..x.len() {
        if x[t].is_nan() {
            missing += 1;
        }
        if missing == 0 {
            out[t] = finite_or_nan(f(&x[t + 1 - w..=t]));
        }
        if x[t + 1 - w].is_nan() {
            missing -= 1;
        }
    }
}

fn mean(win: &[f64]) -> f64 {
    win.iter().sum::<f64>() / win.len() as f64
}

fn sample_var(win: &[f64]) -> f64 {
    if win.len() < 2 {
        return f64::NAN;
    }
    let m = mean(win);
    win.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (win.len() - 1) as f64
}

fn min_max(x: &[f64], w: usize, out: &mut [f64], take_max: bool) {
    out.iter_mut().for_each(|o| *o = f64::NAN);
    if w == 0 || w > x.len() {
        return;
    }
    let better = |a: f64, b: f64| if take_max { a >= b } else { a <= b };
    let mut dq: VecDeque<usize> = VecDeque::with_capacity(w);
    let mut missing = 0usize;
    for t in 0..x.len() {
        if t >= w {
            if x[t - w].is_nan() {
                missing -= 1;
            }
            while dq.front().is_some_and(|&i| i + w <= t) {
                dq.pop_front();
            }
        }
        if x[t].is_nan() {
            missing += 1;
        } else {
            while dq.back().is_some_and(|&i| better(x[t], x[i])) {
                dq.pop_back();
            }
            dq.push_back(t);
        }
        if t + 1 >= w && missing == 0 {
            out[t] = x[*dq.front().expect("window holds values")];
        }
    }
}

pub fn rolling(op: RollingOp, x: &[f64], w: usize, out: &mut [f64]) {
    match op {
        RollingOp::Ref | RollingOp::Delta => {
            for t in 0..x.len() {
                out[t] = if t >= w {
                    if op == RollingOp::Ref {
                        x[t - w]
                    } else {
                        finite_or_nan(x[t] - x[t - w])
                    }
                } else {
                    f64::NAN
                };
            }
        }
        RollingOp::Sum => complete_windows(x, w, out, |win| win.iter().sum()),
        RollingOp::Mean => complete_windows(x, w, out, mean),
        RollingOp::Var => complete_windows(x, w, out, sample_var),
        RollingOp::Std => complete_windows(x, w, out, |win| sample_var(win).sqrt()),
        RollingOp::Mad => complete_windows(x, w, out, |win| {
            let m = mean(win);
            win.iter().map(|v| (v - m).abs()).sum::<f64>() / win.len() as f64
        }),
        RollingOp::Min => min_max(x, w, out, false),
        RollingOp::Max => min_max(x, w, out, true),
    }
}

pub fn pair_rolling(op: PairRollingOp, x: &[f64], y: &[f64], w: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = f64::NAN);
    if w < 2 || w > x.len() {
        return;
    }
    let joint_missing = |t: usize| x[t].is_nan() || y[t].is_nan();
    let mut missing = (0..w - 1).filter(|&t| joint_missing(t)).count();
    for t in w - 1..x.len() {
        if joint_missing(t) {
            missing += 1;
        }
        if missing == 0 {
            let (wx, wy) = (&x[t + 1 - w..=t], &y[t + 1 - w..=t]);
            let (mx, my) = (mean(wx), mean(wy));
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for k in 0..w {
                let dx = wx[k] - mx;
                let dy = wy[k] - my;
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
            let denom = (w - 1) as f64;
            out[t] = match op {
                PairRollingOp::Cov => finite_or_nan(sxy / denom),
                PairRollingOp::Corr => {
                    if (sxx / denom).sqrt() < STD_EPS || (syy / denom).sqrt() < STD_EPS {
                        f64::NAN
                    } else {
                        finite_or_nan(sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
                    }
                }
            };
        }
        if joint_missing(t + 1 - w) {
            missing -= 1;
        }
    }
}
