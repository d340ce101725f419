//! Panel data: dates × stocks matrices of the raw features plus the
//! forward-return label. Missing entries are `NaN` throughout the crate.

mod io;
mod label;
mod synthetic;

use std::ops::Range;

use chrono::NaiveDate;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Feature;

pub use io::{load_panel, load_panel_from_reader, save_panel, save_panel_to_writer, PanelSchema};
pub use label::{compute_label, LabelConfig};
pub use synthetic::{make_synthetic, SyntheticConfig};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate row for ({date}, {symbol})")]
    Duplicate { date: NaiveDate, symbol: String },
    #[error("insufficient data: {dates} dates and {symbols} symbols (need at least 2 of each)")]
    Insufficient { dates: usize, symbols: usize },
    #[error("invalid panel: {0}")]
    Invalid(String),
    #[error("date range {start}..={end} is not on the panel's date axis")]
    Range { start: NaiveDate, end: NaiveDate },
    #[error(transparent)]
    Grammar(#[from] crate::dsl::DslError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Inclusive span of trading days.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<DateRange, DataError> {
        if start > end {
            return Err(DataError::Range { start, end });
        }
        Ok(DateRange { start, end })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelData {
    id: String,
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    features: [Array2<f64>; 6],
    label: Array2<f64>,
}

impl PanelData {
    /// Assembles a panel, checking shapes, ordering and value domains.
    pub fn new(
        id: impl Into<String>,
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        features: [Array2<f64>; 6],
        label: Array2<f64>,
    ) -> Result<PanelData, DataError> {
        let shape = (dates.len(), symbols.len());
        if dates.len() < 2 || symbols.len() < 2 {
            return Err(DataError::Insufficient { dates: dates.len(), symbols: symbols.len() });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Invalid("dates must be strictly increasing".into()));
        }
        let mut sorted = symbols.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::Invalid("duplicate symbol".into()));
        }
        for (f, m) in Feature::ALL.iter().zip(&features) {
            if m.dim() != shape {
                return Err(DataError::Invalid(format!(
                    "{} has shape {:?}, expected {:?}",
                    f.name(),
                    m.dim(),
                    shape
                )));
            }
            let bad = if f.is_price() {
                m.iter().any(|&v| !v.is_nan() && !(v > 0.0 && v.is_finite()))
            } else {
                m.iter().any(|&v| !v.is_nan() && !(v >= 0.0 && v.is_finite()))
            };
            if bad {
                return Err(DataError::Invalid(format!("{} has out-of-domain values", f.name())));
            }
        }
        if label.dim() != shape {
            return Err(DataError::Invalid(format!(
                "label has shape {:?}, expected {:?}",
                label.dim(),
                shape
            )));
        }
        Ok(PanelData { id: id.into(), dates, symbols, features, label })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.symbols.len()
    }

    pub fn feature(&self, f: Feature) -> &Array2<f64> {
        &self.features[f.index()]
    }

    pub fn features(&self) -> &[Array2<f64>; 6] {
        &self.features
    }

    pub fn label(&self) -> &Array2<f64> {
        &self.label
    }

    pub fn with_label(mut self, label: Array2<f64>) -> Result<PanelData, DataError> {
        if label.dim() != self.label.dim() {
            return Err(DataError::Invalid("label shape mismatch".into()));
        }
        self.label = label;
        Ok(self)
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Row span of an inclusive date range; both ends must be panel dates.
    pub fn rows(&self, range: &DateRange) -> Result<Range<usize>, DataError> {
        match (self.date_index(range.start), self.date_index(range.end)) {
            (Some(a), Some(b)) if a <= b => Ok(a..b + 1),
            _ => Err(DataError::Range { start: range.start, end: range.end }),
        }
    }

    pub fn date_range(&self, rows: Range<usize>) -> DateRange {
        DateRange { start: self.dates[rows.start], end: self.dates[rows.end - 1] }
    }

    pub fn full_range(&self) -> DateRange {
        self.date_range(0..self.n_days())
    }

    /// Equality that treats missing entries as equal and compares values bit for bit.
    pub fn bitwise_eq(&self, other: &PanelData) -> bool {
        let same = |a: &Array2<f64>, b: &Array2<f64>| {
            a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.dates == other.dates
            && self.symbols == other.symbols
            && self.features.iter().zip(&other.features).all(|(a, b)| same(a, b))
            && same(&self.label, &other.label)
    }

    /// Panel restricted to a contiguous block of days.
    pub fn slice_days(&self, rows: Range<usize>) -> Result<PanelData, DataError> {
        let take = |m: &Array2<f64>| m.slice(s![rows.clone(), ..]).to_owned();
        PanelData::new(
            format!("{}[{}..{}]", self.id, rows.start, rows.end),
            self.dates[rows.clone()].to_vec(),
            self.symbols.clone(),
            [
                take(&self.features[0]),
                take(&self.features[1]),
                take(&self.features[2]),
                take(&self.features[3]),
                take(&self.features[4]),
                take(&self.features[5]),
            ],
            take(&self.label),
        )
    }
}
