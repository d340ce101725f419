use chrono::{Datelike, Days, NaiveDate, Weekday};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, PanelData};
use crate::dsl::{parse_text, Expr};
use crate::eval::{cross_sectional_zscore, Evaluator};

/// Random-walk market with a label planted from known formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub planted: Vec<String>,
    pub weights: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
    /// From this day index on, the first planted weight changes sign.
    pub sign_flip_at: Option<usize>,
    #[serde(deserialize_with = "crate::cli::config::date")]
    pub start_date: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_stocks: 20,
            n_days: 500,
            planted: vec!["ts_mean(volume,5)".into()],
            weights: vec![1.0],
            noise_std: 0.0,
            seed: 0,
            sign_flip_at: None,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
        }
    }
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Builds the panel, then replaces the label with the per-day z-score of the
/// weighted sum of z-scored planted factors, plus Gaussian noise.
pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<PanelData, DataError> {
    if cfg.planted.len() != cfg.weights.len() {
        return Err(DataError::Invalid(format!(
            "{} planted formulas but {} weights",
            cfg.planted.len(),
            cfg.weights.len()
        )));
    }
    if !(cfg.noise_std >= 0.0) {
        return Err(DataError::Invalid("noise_std must be non-negative".into()));
    }
    let exprs: Vec<Expr> = cfg.planted.iter().map(|s| parse_text(s)).collect::<Result<_, _>>()?;
    let (t_len, n) = (cfg.n_days, cfg.n_stocks);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let shape = (t_len, n);
    let mut open = Array2::zeros(shape);
    let mut high = Array2::zeros(shape);
    let mut low = Array2::zeros(shape);
    let mut close = Array2::zeros(shape);
    let mut volume = Array2::zeros(shape);
    let mut vwap = Array2::zeros(shape);
    for i in 0..n {
        let mut prev_close: f64 = rng.random_range(10.0..100.0);
        let vol: f64 = rng.random_range(0.01..0.03);
        let ret = Normal::new(0.0, vol).expect("positive std");
        let level = Normal::new(13.8, 0.8).expect("positive std").sample(&mut rng);
        let mut log_vol = level;
        for t in 0..t_len {
            let gap: f64 = rng.sample::<f64, _>(StandardNormal) * 0.005;
            let o = prev_close * gap.exp();
            let c = prev_close * ret.sample(&mut rng).exp();
            let up: f64 = rng.sample::<f64, _>(StandardNormal) * 0.01;
            let dn: f64 = rng.sample::<f64, _>(StandardNormal) * 0.01;
            let h = o.max(c) * up.abs().exp();
            let l = o.min(c) * (-dn.abs()).exp();
            log_vol = level + 0.8 * (log_vol - level) + 0.3 * rng.sample::<f64, _>(StandardNormal);
            open[[t, i]] = o;
            close[[t, i]] = c;
            high[[t, i]] = h;
            low[[t, i]] = l;
            vwap[[t, i]] = (o + h + l + c) / 4.0;
            volume[[t, i]] = log_vol.exp();
            prev_close = c;
        }
    }
    let noise: Array2<f64> = Array2::from_shape_fn(shape, |_| rng.sample(StandardNormal));

    let dates = weekdays(cfg.start_date, t_len);
    let symbols: Vec<String> = (0..n).map(|i| format!("S{i:03}")).collect();
    let panel = PanelData::new(
        format!("synthetic-{}", cfg.seed),
        dates,
        symbols,
        [open, high, low, close, volume, vwap],
        Array2::from_elem(shape, f64::NAN),
    )?;

    let ev = Evaluator::new(&panel);
    let zs: Vec<Array2<f64>> =
        exprs.iter().map(|e| cross_sectional_zscore(&ev.values(e).view())).collect();
    let mut mix = Array2::from_elem(shape, f64::NAN);
    for t in 0..t_len {
        for i in 0..n {
            let mut s = 0.0;
            for (k, z) in zs.iter().enumerate() {
                let mut w = cfg.weights[k];
                if k == 0 && cfg.sign_flip_at.is_some_and(|at| t >= at) {
                    w = -w;
                }
                s += w * z[[t, i]];
            }
            mix[[t, i]] = s;
        }
    }
    let mut label = cross_sectional_zscore(&mix.view());
    label.zip_mut_with(&noise, |l, e| *l += cfg.noise_std * e);
    panel.with_label(label)
}
