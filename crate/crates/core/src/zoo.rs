//! The factor zoo: qualified, mutually low-correlation formulas with their
//! cached (sign-adjusted) values.

use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PanelData;
use crate::dsl::{parse_text, rpn_encode, token_indices, DslError, Expr, Vocabulary};
use crate::eval::Evaluator;
use crate::metrics::{factor_metrics, psi, Candidate, FactorMetrics};

#[derive(Debug, Error)]
pub enum ZooError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("zoo file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("zoo factor {id}: {source}")]
    Formula { id: usize, source: DslError },
    #[error("zoo file: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct ZooEntry {
    pub id: usize,
    pub expr: Expr,
    /// Normalized text; the identity used for duplicate checks.
    pub text: String,
    /// Vocabulary rows of the post-order program, ending with the end marker.
    pub rpn: Vec<usize>,
    pub sign: f64,
    /// Metrics of the unflipped formula on the admission range.
    pub metrics: FactorMetrics,
    /// `sign · f` on the zoo's panel.
    pub values: Array2<f64>,
    pub admitted_at_round: usize,
    /// ψ against the zoo at admission time.
    pub psi_at_admission: f64,
}

#[derive(Clone, Debug)]
pub struct FactorZoo {
    vocab: Vocabulary,
    max_len: usize,
    entries: Vec<ZooEntry>,
}

#[derive(Serialize, Deserialize)]
struct ZooFile {
    vocabulary: Vocabulary,
    max_len: usize,
    factors: Vec<ZooRecord>,
}

#[derive(Serialize, Deserialize)]
struct ZooRecord {
    id: usize,
    expr: String,
    rpn: Vec<usize>,
    sign: f64,
    ic: f64,
    icir: f64,
    rank_ic: f64,
    admitted_at_round: usize,
}

fn json_num(v: f64) -> f64 {
    // JSON has no NaN
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

impl FactorZoo {
    pub fn new(vocab: Vocabulary, max_len: usize) -> FactorZoo {
        FactorZoo { vocab, max_len, entries: Vec::new() }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ZooEntry] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&ZooEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn contains_expr(&self, text: &str) -> bool {
        self.entries.iter().any(|e| e.text == text)
    }

    pub fn member_values(&self) -> impl Iterator<Item = ArrayView2<'_, f64>> {
        self.entries.iter().map(|e| e.values.view())
    }

    pub fn psi(&self, values: &ArrayView2<f64>, rows: Range<usize>) -> f64 {
        psi(values, self.member_values(), rows)
    }

    /// Appends a candidate that already passed qualification; ids count up from 1.
    pub fn admit(&mut self, c: Candidate, sign: f64, psi: f64, round: usize) -> &ZooEntry {
        let rpn = rpn_encode(&c.expr, c.expr.rpn_len() + 1)
            .ok()
            .and_then(|p| token_indices(&p, &self.vocab).ok())
            .unwrap_or_default();
        let values = if sign < 0.0 { c.values.mapv(|v| -v) } else { c.values };
        let id = self.entries.last().map_or(1, |e| e.id + 1);
        self.entries.push(ZooEntry {
            id,
            expr: c.expr,
            text: c.text,
            rpn,
            sign,
            metrics: c.metrics,
            values,
            admitted_at_round: round,
            psi_at_admission: psi,
        });
        self.entries.last().expect("just pushed")
    }

    /// Zoo built from explicit formulas (signs from their IC on `rows`),
    /// skipping the admission gate.
    pub fn from_formulas(
        formulas: &[&str],
        panel: &PanelData,
        rows: Range<usize>,
        vocab: Vocabulary,
        max_len: usize,
    ) -> Result<FactorZoo, ZooError> {
        let ev = Evaluator::new(panel);
        let mut zoo = FactorZoo::new(vocab, max_len);
        for (k, src) in formulas.iter().enumerate() {
            let expr = parse_text(src).map_err(|source| ZooError::Formula { id: k + 1, source })?;
            let values = ev.values(&expr);
            let metrics = factor_metrics(&values.view(), &panel.label().view(), rows.clone());
            let sign = if metrics.ic < 0.0 { -1.0 } else { 1.0 };
            let psi = zoo.psi(&values.view(), rows.clone());
            let text = expr.to_string();
            zoo.admit(Candidate { expr, text, values, metrics }, sign, psi, 0);
        }
        Ok(zoo)
    }

    pub fn to_json(&self) -> String {
        let file = ZooFile {
            vocabulary: self.vocab.clone(),
            max_len: self.max_len,
            factors: self
                .entries
                .iter()
                .map(|e| ZooRecord {
                    id: e.id,
                    expr: e.text.clone(),
                    rpn: e.rpn.clone(),
                    sign: e.sign,
                    ic: json_num(e.metrics.ic),
                    icir: json_num(e.metrics.icir),
                    rank_ic: json_num(e.metrics.rank_ic),
                    admitted_at_round: e.admitted_at_round,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("zoo serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ZooError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Reads a zoo file and re-evaluates every formula on `panel`. Metrics
    /// are recomputed on `rows`.
    pub fn from_json(text: &str, panel: &PanelData, rows: Range<usize>) -> Result<FactorZoo, ZooError> {
        let file: ZooFile = serde_json::from_str(text)?;
        let vocab = Vocabulary::from_tokens(file.vocabulary.tokens().to_vec()).map_err(ZooError::Invalid)?;
        let ev = Evaluator::new(panel);
        let mut zoo = FactorZoo::new(vocab, file.max_len);
        for rec in file.factors {
            let expr = parse_text(&rec.expr).map_err(|source| ZooError::Formula { id: rec.id, source })?;
            if rec.rpn.iter().any(|&i| i >= zoo.vocab.len()) {
                return Err(ZooError::Invalid(format!("factor {} has an out-of-vocabulary token", rec.id)));
            }
            if zoo.get(rec.id).is_some() {
                return Err(ZooError::Invalid(format!("duplicate factor id {}", rec.id)));
            }
            let raw = ev.values(&expr);
            let metrics = factor_metrics(&raw.view(), &panel.label().view(), rows.clone());
            let sign = if rec.sign < 0.0 { -1.0 } else { 1.0 };
            let values = if sign < 0.0 { raw.mapv(|v| -v) } else { raw };
            zoo.entries.push(ZooEntry {
                id: rec.id,
                text: expr.to_string(),
                expr,
                rpn: rec.rpn,
                sign,
                metrics,
                values,
                admitted_at_round: rec.admitted_at_round,
                psi_at_admission: f64::NAN,
            });
        }
        Ok(zoo)
    }

    pub fn load(path: impl AsRef<Path>, panel: &PanelData, rows: Range<usize>) -> Result<FactorZoo, ZooError> {
        FactorZoo::from_json(&fs::read_to_string(path)?, panel, rows)
    }
}
