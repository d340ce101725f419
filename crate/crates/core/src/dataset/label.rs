use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::PanelData;
use crate::dsl::Feature;

/// Forward-return label `vwap(t+horizon) / vwap(t+entry_lag) - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub horizon: usize,
    pub entry_lag: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { horizon: 21, entry_lag: 1 }
    }
}

impl LabelConfig {
    /// Days after `t` until the label dated `t` is observable.
    pub fn realized_after(&self) -> usize {
        self.horizon.max(self.entry_lag)
    }
}

pub fn compute_label(panel: PanelData, cfg: LabelConfig) -> PanelData {
    assert!(cfg.horizon >= 1, "label horizon must be positive");
    let vwap = panel.feature(Feature::Vwap);
    let (t_len, n) = vwap.dim();
    let far = cfg.horizon.max(cfg.entry_lag);
    let label = Array2::from_shape_fn((t_len, n), |(t, i)| {
        if t + far >= t_len {
            return f64::NAN;
        }
        let exit = vwap[[t + cfg.horizon, i]];
        let entry = vwap[[t + cfg.entry_lag, i]];
        let v = exit / entry - 1.0;
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    });
    panel.with_label(label).expect("label shape matches panel")
}
