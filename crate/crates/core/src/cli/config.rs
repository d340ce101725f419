use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::BacktestConfig;
use crate::combiner::CombinerConfig;
use crate::dataset::{DataError, DateRange, LabelConfig, PanelData, SyntheticConfig};
use crate::metrics::FitnessConfig;
use crate::miner::MinerConfig;
use crate::rng::subseed;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Panel CSV; `<output_dir>/panel.csv` when unset.
    pub panel: Option<PathBuf>,
    /// Zoo JSON; `<output_dir>/zoo.json` when unset.
    pub zoo: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    #[serde(deserialize_with = "date")]
    pub start: NaiveDate,
    #[serde(deserialize_with = "date")]
    pub end: NaiveDate,
}

/// Accepts a bare TOML date as well as a quoted `YYYY-MM-DD` string.
pub(crate) fn date<'de, D: serde::Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Toml(t) => t.to_string(),
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|e| serde::de::Error::custom(format!("date {text:?}: {e}")))
}

/// Train, validation and test spans. Unset spans split the panel 60/20/20.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ranges {
    pub train: Option<Span>,
    pub valid: Option<Span>,
    pub test: Option<Span>,
}

/// Row spans resolved against a panel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

/// Parsed run configuration. `seed` inside module sections is ignored;
/// those streams derive from the global seed. The label section also sets
/// the miner's and combiner's horizon.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub ranges: Ranges,
    pub label: LabelConfig,
    pub synthetic: SyntheticConfig,
    pub miner: MinerConfig,
    pub fitness: FitnessConfig,
    pub combiner: CombinerConfig,
    pub backtest: BacktestConfig,
}

fn check_span(name: &str, s: &Option<Span>, errs: &mut Vec<String>) {
    if let Some(s) = s {
        if s.start > s.end {
            errs.push(format!("ranges.{name} starts after it ends ({} > {})", s.start, s.end));
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, Vec<String>> {
        let text = fs::read_to_string(path).map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.panel, &mut cfg.paths.zoo, &mut cfg.paths.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![e.to_string().trim_end().to_string()])
    }

    /// Copies the shared settings into the module sections.
    pub fn resolve(mut self) -> RunConfig {
        self.miner.fitness = self.fitness;
        self.miner.label_horizon = self.label.realized_after();
        self.miner.seed = subseed(self.seed, "miner");
        self.synthetic.seed = subseed(self.seed, "synthetic");
        self.combiner.horizon = self.label.horizon;
        self.combiner.entry_lag = self.label.entry_lag;
        self
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.label.horizon == 0 {
            errs.push("label.horizon must be at least 1".to_string());
        }
        errs.extend(self.miner.validate());
        errs.extend(self.combiner.validate());
        errs.extend(self.backtest.validate());
        if self.synthetic.planted.len() != self.synthetic.weights.len() {
            errs.push(format!(
                "synthetic.planted has {} formulas but synthetic.weights has {}",
                self.synthetic.planted.len(),
                self.synthetic.weights.len()
            ));
        }
        if self.synthetic.n_stocks < 2 || self.synthetic.n_days < 2 {
            errs.push("synthetic.n_stocks and synthetic.n_days must be at least 2".to_string());
        }
        let r = &self.ranges;
        check_span("train", &r.train, &mut errs);
        check_span("valid", &r.valid, &mut errs);
        check_span("test", &r.test, &mut errs);
        let spans = [("train", r.train), ("valid", r.valid), ("test", r.test)];
        let set = spans.iter().filter(|s| s.1.is_some()).count();
        if set != 0 && set != 3 {
            errs.push("ranges: set all of train, valid and test, or none".to_string());
        }
        if let (Some(a), Some(b), Some(c)) = (r.train, r.valid, r.test) {
            if a.end >= b.start {
                errs.push(format!("ranges.train must end before ranges.valid starts ({} >= {})", a.end, b.start));
            }
            if b.end >= c.start {
                errs.push(format!("ranges.valid must end before ranges.test starts ({} >= {})", b.end, c.start));
            }
        }
        errs
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn panel_path(&self) -> PathBuf {
        self.paths.panel.clone().unwrap_or_else(|| self.output_dir().join("panel.csv"))
    }

    pub fn zoo_path(&self) -> PathBuf {
        self.paths.zoo.clone().unwrap_or_else(|| self.output_dir().join("zoo.json"))
    }

    pub fn split(&self, panel: &PanelData) -> Result<Split, DataError> {
        let r = &self.ranges;
        if let (Some(a), Some(b), Some(c)) = (r.train, r.valid, r.test) {
            let rows = |s: Span| panel.rows(&DateRange::new(s.start, s.end)?);
            return Ok(Split { train: rows(a)?, valid: rows(b)?, test: rows(c)? });
        }
        let n = panel.n_days();
        let (a, b) = (n * 3 / 5, n * 4 / 5);
        Ok(Split { train: 0..a, valid: a..b, test: b..n })
    }
}
