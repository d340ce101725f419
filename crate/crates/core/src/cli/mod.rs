//! Command-line pipeline: synthetic data, mining, combination, backtest and
//! reports, driven by one TOML file.

pub(crate) mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::ArrayView2;
use serde::Serialize;
use thiserror::Error;

pub use config::{Paths, Ranges, RunConfig, Span, Split};

use crate::backtest::{equity_svg, run_backtest, write_result_csv, BacktestResult};
use crate::combiner::{read_predictions, run_combination_rows, run_static_combination, write_predictions, write_snapshots};
use crate::dataset::{compute_label, load_panel, make_synthetic, save_panel, DataError, PanelData, PanelSchema};
use crate::dsl::parse_text;
use crate::eval::Evaluator;
use crate::metrics::factor_metrics;
use crate::miner::{run_mining_rows, MinerError};
use crate::zoo::{FactorZoo, ZooError};

#[derive(Debug, Parser)]
#[command(name = "alphaforge", version, about = "Formulaic alpha mining and dynamic factor combination")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic panel with a planted label.
    GenSynth,
    /// Mines a factor zoo on the training range.
    Mine,
    /// Combines the zoo into daily Mega-Alpha predictions over the test range.
    Combine,
    /// Simulates the top-k portfolio on the predictions.
    Backtest,
    /// Evaluates one formula and reports its metrics on each range.
    EvalExpr { formula: String },
    /// Markdown summary of factors, static combination and Mega-Alpha on the test range.
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(e) => CliError::Runtime(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ZooError> for CliError {
    fn from(e: ZooError) -> Self {
        match e {
            ZooError::Io(e) => CliError::Runtime(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<MinerError> for CliError {
    fn from(e: MinerError) -> Self {
        match e {
            MinerError::Config(errs) => CliError::Config(errs),
            MinerError::ShortRange { .. } | MinerError::Data(_) => CliError::Data(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(vec![e.to_string().trim_end().to_string()]))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.paths.output_dir = Some(d.clone());
    }
    let cfg = cfg.resolve();
    let mut errs = cfg.validate();
    if cli.jobs == Some(0) {
        errs.push("--jobs must be at least 1".to_string());
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    pool.install(|| match &cli.command {
        Command::GenSynth => gen_synth(&cfg, &out),
        Command::Mine => mine(&cfg, &out),
        Command::Combine => combine(&cfg, &out),
        Command::Backtest => backtest(&cfg, &out),
        Command::EvalExpr { formula } => eval_expr(&cfg, &out, formula),
        Command::Report => report(&cfg, &out),
    })
}

fn require(path: &Path, what: &str, producer: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} {} not found; run `alphaforge {producer}` first", path.display())))
    }
}

/// Loads the panel, deriving the label when the file has none.
fn panel(cfg: &RunConfig) -> Result<PanelData, CliError> {
    let path = cfg.panel_path();
    require(&path, "panel", "gen-synth")?;
    let p = load_panel(&path, &PanelSchema::default())?;
    Ok(if p.label().iter().all(|v| v.is_nan()) { compute_label(p, cfg.label) } else { p })
}

fn zoo(cfg: &RunConfig, panel: &PanelData, rows: Range<usize>) -> Result<FactorZoo, CliError> {
    let path = cfg.zoo_path();
    require(&path, "zoo", "mine")?;
    Ok(FactorZoo::load(&path, panel, rows)?)
}

fn predictions(out: &Path, panel: &PanelData) -> Result<ndarray::Array2<f64>, CliError> {
    let path = out.join("predictions.csv");
    require(&path, "predictions", "combine")?;
    Ok(read_predictions(panel, &path)?)
}

fn gen_synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = make_synthetic(&cfg.synthetic)?;
    let path = cfg.paths.panel.clone().unwrap_or_else(|| out.join("panel.csv"));
    save_panel(&p, &path)?;
    println!("wrote {} ({} days, {} stocks)", path.display(), p.n_days(), p.n_stocks());
    Ok(())
}

fn csv_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// `factor_id,expr,ic,rank_ic,icir,rank_icir,psi`.
fn write_factor_report(zoo: &FactorZoo, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut rec = |r: [String; 7]| w.write_record(r).map_err(|e| CliError::Runtime(e.to_string()));
    rec(["factor_id", "expr", "ic", "rank_ic", "icir", "rank_icir", "psi"].map(String::from))?;
    for e in zoo.entries() {
        let m = &e.metrics;
        rec([
            e.id.to_string(),
            e.text.clone(),
            csv_num(m.ic),
            csv_num(m.rank_ic),
            csv_num(m.icir),
            csv_num(m.rank_icir),
            csv_num(e.psi_at_admission),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), CliError> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).map_err(|e| CliError::Runtime(e.to_string()))?);
        s.push('\n');
    }
    fs::write(path, s).map_err(io_err(path))
}

fn mine(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let panel = panel(cfg)?;
    let split = cfg.split(&panel)?;
    let outcome = run_mining_rows(&panel, split.train.clone(), &cfg.miner)?;
    let zoo_path = cfg.zoo_path();
    outcome.zoo.save(&zoo_path)?;
    write_factor_report(&outcome.zoo, &out.join("factors.csv"))?;
    write_jsonl(&outcome.rounds, &out.join("rounds.jsonl"))?;
    println!(
        "mined {} factors in {} rounds{}; wrote {}",
        outcome.zoo.len(),
        outcome.rounds.len(),
        if outcome.reached_target { "" } else { " (target not reached)" },
        zoo_path.display()
    );
    Ok(())
}

fn combine(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let panel = panel(cfg)?;
    let split = cfg.split(&panel)?;
    let zoo = zoo(cfg, &panel, split.train.clone())?;
    let c = run_combination_rows(&zoo, &panel, split.test.clone(), &cfg.combiner);
    write_predictions(&panel, &c.predictions.view(), split.test.clone(), out.join("predictions.csv"))?;
    let snap = out.join("snapshots.jsonl");
    write_snapshots(&c.snapshots, &snap).map_err(io_err(&snap))?;
    println!("combined {} factors over {} test days; test IC {:.4}", zoo.len(), split.test.len(), c.ic(&panel));
    Ok(())
}

fn backtest(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let panel = panel(cfg)?;
    let split = cfg.split(&panel)?;
    let scores = predictions(out, &panel)?;
    let res = run_backtest(&scores.view(), &panel, split.test.clone(), &cfg.backtest)?;
    write_result_csv(&res, out.join("backtest.csv"))?;
    let svg = out.join("equity.svg");
    fs::write(&svg, equity_svg(&res)).map_err(io_err(&svg))?;
    let summary = res.summary();
    let sp = out.join("backtest_summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&sp, text + "\n").map_err(io_err(&sp))?;
    println!(
        "backtest over {} days: total {:.2}%, benchmark {:.2}%, excess {:.2}%",
        summary.days,
        summary.total_return * 100.0,
        summary.benchmark_return * 100.0,
        summary.excess_return * 100.0
    );
    Ok(())
}

fn eval_expr(cfg: &RunConfig, out: &Path, formula: &str) -> Result<(), CliError> {
    let expr = parse_text(formula).map_err(|e| CliError::Config(vec![format!("formula `{formula}`: {e}")]))?;
    let panel = panel(cfg)?;
    let split = cfg.split(&panel)?;
    let values = Evaluator::new(&panel).values(&expr);
    let path = out.join("factor.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let werr = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["date", "symbol", "value"]).map_err(werr)?;
    for (t, date) in panel.dates().iter().enumerate() {
        let d = date.to_string();
        for (i, sym) in panel.symbols().iter().enumerate() {
            w.write_record([d.as_str(), sym.as_str(), &csv_num(values[[t, i]])]).map_err(werr)?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    println!("{expr}");
    for (name, rows) in [("train", split.train), ("valid", split.valid), ("test", split.test)] {
        let m = factor_metrics(&values.view(), &panel.label().view(), rows);
        println!("{name}: IC {:.4} RankIC {:.4} ICIR {:.4} RankICIR {:.4}", m.ic, m.rank_ic, m.icir, m.rank_icir);
    }
    Ok(())
}

struct Row {
    name: String,
    ic: f64,
    rank_ic: f64,
    icir: f64,
    cum: f64,
}

fn row(name: String, scores: &ArrayView2<f64>, panel: &PanelData, cfg: &RunConfig, rows: Range<usize>) -> Result<Row, CliError> {
    let m = factor_metrics(scores, &panel.label().view(), rows.clone());
    let bt: BacktestResult = run_backtest(scores, panel, rows, &cfg.backtest)?;
    Ok(Row { name, ic: m.ic, rank_ic: m.rank_ic, icir: m.icir, cum: bt.cum_return.last().copied().unwrap_or(0.0) })
}

fn pct(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{:.2}", v * 100.0)
    }
}

fn report(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let panel = panel(cfg)?;
    let split = cfg.split(&panel)?;
    let zoo = zoo(cfg, &panel, split.train.clone())?;
    let dynamic = predictions(out, &panel)?;
    let test = split.test.clone();
    let lag = cfg.label.horizon + cfg.label.entry_lag;
    let fit = split.train.start..test.start.saturating_sub(lag).max(split.train.start + 1);
    let fixed = run_static_combination(&zoo, &panel, fit, test.clone(), &cfg.combiner);
    let mut rows = Vec::new();
    for e in zoo.entries() {
        rows.push(row(format!("#{} `{}`", e.id, e.text), &e.values.view(), &panel, cfg, test.clone())?);
    }
    rows.push(row("Static".into(), &fixed.predictions.view(), &panel, cfg, test.clone())?);
    rows.push(row("**Mega-Alpha**".into(), &dynamic.view(), &panel, cfg, test.clone())?);

    let mut md = String::new();
    let _ = writeln!(md, "<!-- generated {} -->", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let _ = writeln!(md, "# AlphaForge report\n");
    let dates = panel.dates();
    let (a, b) = (dates[test.start], dates[test.end - 1]);
    let _ = writeln!(md, "Panel `{}`, {} stocks. Test range {a} to {b} ({} days).\n", panel.id(), panel.n_stocks(), test.len());
    let _ = writeln!(md, "| Method | IC(%) | RankIC(%) | ICIR | Cumulative return(%) |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|");
    for r in &rows {
        let icir = if r.icir.is_nan() { "-".into() } else { format!("{:.3}", r.icir) };
        let _ = writeln!(md, "| {} | {} | {} | {} | {} |", r.name, pct(r.ic), pct(r.rank_ic), icir, pct(r.cum));
    }
    let path = out.join("report.md");
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(md.as_bytes()).map_err(io_err(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}
