use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use super::{DataError, PanelData};
use crate::dsl::Feature;

/// Column names of the input CSV.
#[derive(Clone, Debug)]
pub struct PanelSchema {
    pub date: String,
    pub symbol: String,
    /// Feature columns in `Feature::ALL` order.
    pub features: [String; 6],
    /// Optional label column; read when present in the header.
    pub label: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        PanelSchema {
            date: "date".into(),
            symbol: "symbol".into(),
            features: Feature::ALL.map(|f| f.name().to_string()),
            label: "label".into(),
        }
    }
}

fn parse_value(field: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("nan") || field.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    field.parse::<f64>().map_err(|_| DataError::Parse {
        line,
        message: format!("column {column}: `{field}` is not a number"),
    })
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelData, DataError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut panel = load_panel_from_reader(file, schema)?;
    panel.id = path.display().to_string();
    Ok(panel)
}

/// Reads `date,symbol,open,high,low,close,volume,vwap[,label]` rows into
/// dense matrices; absent (date, symbol) pairs become missing entries.
pub fn load_panel_from_reader<R: Read>(reader: R, schema: &PanelSchema) -> Result<PanelData, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let missing_col = |name: &str| DataError::Parse { line: 1, message: format!("missing column `{name}`") };
    let date_col = col(&schema.date).ok_or_else(|| missing_col(&schema.date))?;
    let sym_col = col(&schema.symbol).ok_or_else(|| missing_col(&schema.symbol))?;
    let mut feat_cols = [0usize; 6];
    for (slot, name) in feat_cols.iter_mut().zip(&schema.features) {
        *slot = col(name).ok_or_else(|| missing_col(name))?;
    }
    let label_col = col(&schema.label);

    struct Row {
        date: NaiveDate,
        symbol: String,
        values: [f64; 6],
        label: f64,
    }

    let mut rows = Vec::new();
    let mut seen: HashSet<(NaiveDate, String)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d").map_err(|_| DataError::Parse {
            line,
            message: format!("`{}` is not an ISO-8601 date", field(date_col)),
        })?;
        let symbol = field(sym_col).to_string();
        if symbol.is_empty() {
            return Err(DataError::Parse { line, message: "empty symbol".into() });
        }
        let mut values = [f64::NAN; 6];
        for (k, f) in Feature::ALL.iter().enumerate() {
            let v = parse_value(field(feat_cols[k]), line, f.name())?;
            let ok = v.is_nan() || (v.is_finite() && if f.is_price() { v > 0.0 } else { v >= 0.0 });
            if !ok {
                return Err(DataError::Parse { line, message: format!("{} out of range: {v}", f.name()) });
            }
            values[k] = v;
        }
        let label = match label_col {
            Some(c) => parse_value(field(c), line, &schema.label)?,
            None => f64::NAN,
        };
        if !seen.insert((date, symbol.clone())) {
            return Err(DataError::Duplicate { date, symbol });
        }
        rows.push(Row { date, symbol, values, label });
    }

    let dates: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect::<BTreeSet<_>>().into_iter().collect();
    let symbols: Vec<String> =
        rows.iter().map(|r| r.symbol.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if dates.len() < 2 || symbols.len() < 2 {
        return Err(DataError::Insufficient { dates: dates.len(), symbols: symbols.len() });
    }
    let di: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let si: BTreeMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let shape = (dates.len(), symbols.len());
    let mut features: [Array2<f64>; 6] = std::array::from_fn(|_| Array2::from_elem(shape, f64::NAN));
    let mut label = Array2::from_elem(shape, f64::NAN);
    for r in &rows {
        let (t, i) = (di[&r.date], si[r.symbol.as_str()]);
        for k in 0..6 {
            features[k][[t, i]] = r.values[k];
        }
        label[[t, i]] = r.label;
    }
    PanelData::new("csv", dates, symbols, features, label)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn save_panel(panel: &PanelData, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = File::create(path)?;
    save_panel_to_writer(panel, std::io::BufWriter::new(file))
}

/// Writes every (date, symbol) pair in date-then-symbol order with the label
/// as the last column. Values use the shortest text that parses back exactly.
pub fn save_panel_to_writer<W: Write>(panel: &PanelData, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "symbol", "open", "high", "low", "close", "volume", "vwap", "label"])?;
    for (t, date) in panel.dates().iter().enumerate() {
        for (i, sym) in panel.symbols().iter().enumerate() {
            let mut rec = Vec::with_capacity(9);
            rec.push(date.format("%Y-%m-%d").to_string());
            rec.push(sym.clone());
            for f in Feature::ALL {
                rec.push(fmt_value(panel.feature(f)[[t, i]]));
            }
            rec.push(fmt_value(panel.label()[[t, i]]));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,symbol,open,high,low,close,volume,vwap\n";

    fn load(text: &str) -> Result<PanelData, DataError> {
        load_panel_from_reader(text.as_bytes(), &PanelSchema::default())
    }

    #[test]
    fn minimal_file() {
        let text = format!(
            "{HEADER}2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n2020-01-02,BBB,1,2,0.5,1.5,100,1.2\n\
             2020-01-03,AAA,1,2,0.5,1.5,100,1.2\n2020-01-03,BBB,1,2,0.5,1.5,100,1.2\n"
        );
        let p = load(&text).unwrap();
        assert_eq!((p.n_days(), p.n_stocks()), (2, 2));
        assert!(p.label().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn duplicate_pair() {
        let text = format!(
            "{HEADER}2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n"
        );
        match load(&text) {
            Err(DataError::Duplicate { date, symbol }) => {
                assert_eq!(date.to_string(), "2020-01-02");
                assert_eq!(symbol, "AAA");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn absent_pair_is_missing() {
        let text = format!(
            "{HEADER}2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n2020-01-02,BBB,1,2,0.5,1.5,100,1.2\n\
             2020-01-03,AAA,1,2,0.5,1.5,100,1.2\n\
             2020-01-06,AAA,1,2,0.5,1.5,100,1.2\n2020-01-06,BBB,1,2,0.5,1.5,100,1.2\n"
        );
        let p = load(&text).unwrap();
        assert_eq!(p.n_days(), 3);
        for f in Feature::ALL {
            let m = p.feature(f);
            for t in 0..3 {
                for i in 0..2 {
                    assert_eq!(m[[t, i]].is_nan(), (t, i) == (1, 1), "{f:?} {t} {i}");
                }
            }
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!(
            "{HEADER}2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n2020-01-02,BBB,1,two,0.5,1.5,100,1.2\n"
        );
        assert!(matches!(load(&text), Err(DataError::Parse { line: 3, .. })));
        let text = format!("{HEADER}2020-13-02,AAA,1,2,0.5,1.5,100,1.2\n");
        assert!(matches!(load(&text), Err(DataError::Parse { line: 2, .. })));
    }

    #[test]
    fn too_small() {
        let text = format!("{HEADER}2020-01-02,AAA,1,2,0.5,1.5,100,1.2\n2020-01-03,AAA,1,2,0.5,1.5,100,1.2\n");
        assert!(matches!(load(&text), Err(DataError::Insufficient { dates: 2, symbols: 1 })));
    }

    #[test]
    fn negative_volume_rejected() {
        let text = format!("{HEADER}2020-01-02,AAA,1,2,0.5,1.5,-100,1.2\n");
        assert!(matches!(load(&text), Err(DataError::Parse { line: 2, .. })));
    }
}
