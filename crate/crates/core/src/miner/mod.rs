//! Mining loop: a predictor P learns fitness from the sample library, a
//! generator G is trained to maximize P under a diversity penalty, and the
//! programs G emits are qualified into the zoo.

mod generator;
mod library;

use std::collections::HashMap;
use std::ops::Range;

use log::{info, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, DateRange, PanelData};
use crate::dsl::{program_from_indices, token_indices, Grammar, Vocabulary};
use crate::metrics::{mean_daily_correlation, qualify_with, EvalContext, FitnessConfig};
use crate::nn::{rmse, Activation, Adam, AdamConfig, Input, Mlp, NetSpec, NnError};
use crate::rng::substream;
use crate::zoo::FactorZoo;

pub use generator::{
    generator_pass, generator_step, sample_programs, standard_normal_batch, GeneratorObjective, GeneratorPass,
};
pub use library::{LibraryEntry, SampleLibrary};
use library::{CacheItem, ExprCache};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("invalid miner configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("training range has {days} days; at least {needed} are required")]
    ShortRange { days: usize, needed: usize },
    #[error("predictor loss became non-finite (epoch {epoch}, batch {batch})")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    /// Stop once the zoo holds this many factors.
    pub target_factors: usize,
    /// Random programs in the initial library.
    pub library_size: usize,
    pub library_cap: usize,
    /// Generator updates per round.
    pub epochs: usize,
    /// Passes over the library when fitting the predictor.
    pub predictor_epochs: usize,
    pub batch_size: usize,
    /// Generator noise width Q.
    pub noise_dim: usize,
    /// Program length S, end marker included.
    pub max_len: usize,
    pub lambda_onehot: f64,
    pub lambda_hidden: f64,
    pub temperature: f64,
    pub rounds: usize,
    pub predictor_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub optimizer: AdamConfig,
    pub fitness: FitnessConfig,
    /// Forward-return horizon of the label; bounds the shortest usable range.
    pub label_horizon: usize,
    pub seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            target_factors: 10,
            library_size: 2000,
            library_cap: 50_000,
            epochs: 200,
            predictor_epochs: 20,
            batch_size: 128,
            noise_dim: 64,
            max_len: 20,
            lambda_onehot: 0.1,
            lambda_hidden: 0.1,
            temperature: 1.0,
            rounds: 50,
            predictor_hidden: vec![256, 64],
            generator_hidden: vec![256],
            optimizer: AdamConfig::default(),
            fitness: FitnessConfig::default(),
            label_horizon: 21,
            seed: 0,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = [
            ("library_size", self.library_size),
            ("library_cap", self.library_cap),
            ("batch_size", self.batch_size),
            ("noise_dim", self.noise_dim),
            ("rounds", self.rounds),
        ];
        for (name, v) in positive {
            if v == 0 {
                errs.push(format!("miner.{name} must be positive"));
            }
        }
        if self.max_len < 2 {
            errs.push(format!("miner.max_len must be at least 2, got {}", self.max_len));
        }
        if self.max_len > 64 {
            errs.push(format!("miner.max_len must be at most 64, got {}", self.max_len));
        }
        for (name, v) in [("lambda_onehot", self.lambda_onehot), ("lambda_hidden", self.lambda_hidden)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("miner.{name} must be non-negative, got {v}"));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            errs.push(format!("miner.temperature must be positive, got {}", self.temperature));
        }
        for (name, w) in [("predictor_hidden", &self.predictor_hidden), ("generator_hidden", &self.generator_hidden)] {
            if w.contains(&0) {
                errs.push(format!("miner.{name} widths must be positive, got {w:?}"));
            }
        }
        errs.extend(self.optimizer.validate("miner.optimizer"));
        errs.extend(self.fitness.validate());
        errs
    }

    pub fn predictor_spec(&self, vocab_len: usize) -> NetSpec {
        let mut widths = vec![vocab_len * self.max_len];
        widths.extend(&self.predictor_hidden);
        widths.push(1);
        NetSpec { widths, activation: Activation::Relu }
    }

    pub fn generator_spec(&self, vocab_len: usize) -> NetSpec {
        let mut widths = vec![self.noise_dim];
        widths.extend(&self.generator_hidden);
        widths.push(vocab_len * self.max_len);
        NetSpec { widths, activation: Activation::Relu }
    }

    fn objective(&self) -> GeneratorObjective {
        GeneratorObjective {
            lambda_onehot: self.lambda_onehot,
            lambda_hidden: self.lambda_hidden,
            temperature: self.temperature,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorFit {
    /// RMSE over the whole library after the last epoch.
    pub final_loss: f64,
    pub skipped_batches: usize,
}

/// Fits P to the library's fitness values by RMSE over shuffled mini-batches.
pub fn train_predictor(
    p: &mut Mlp,
    opt: &mut Adam,
    library: &SampleLibrary,
    epochs: usize,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<PredictorFit, MinerError> {
    assert!(!library.is_empty(), "predictor needs a non-empty library");
    let mut order: Vec<usize> = (0..library.len()).collect();
    let mut skipped = 0;
    for epoch in 0..epochs {
        order.shuffle(rng);
        for (b, chunk) in order.chunks(batch.max(1)).enumerate() {
            let active: Vec<Vec<usize>> = chunk.iter().map(|&i| library.active_columns(i)).collect();
            let target: Vec<f64> = chunk.iter().map(|&i| library.get(i).fitness).collect();
            let trace = p.forward(Input::Sparse(&active))?;
            let pred: Vec<f64> = trace.output.column(0).to_vec();
            let (loss, _) = rmse(&pred, &target);
            if !loss.is_finite() {
                return Err(MinerError::NonFinite { epoch, batch: b });
            }
            // descend on the squared error: same minimizer, and the step
            // shrinks near the fit instead of keeping unit size
            let n = pred.len() as f64;
            let grad: Vec<f64> = pred.iter().zip(&target).map(|(p, t)| 2.0 * (p - t) / n).collect();
            let dout = Array2::from_shape_vec((grad.len(), 1), grad).expect("column");
            let (g, _) = p.backward(Input::Sparse(&active), &trace, &dout.view())?;
            match p.apply(opt, &g) {
                Ok(()) => {}
                Err(NnError::NonFinite) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(PredictorFit { final_loss: predictor_loss(p, library)?, skipped_batches: skipped })
}

/// RMSE of P over the whole library.
pub fn predictor_loss(p: &Mlp, library: &SampleLibrary) -> Result<f64, MinerError> {
    let active: Vec<Vec<usize>> = (0..library.len()).map(|i| library.active_columns(i)).collect();
    let pred = p.predict(Input::Sparse(&active))?;
    Ok(rmse(&pred.column(0).to_vec(), &library.fitness()).0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: usize,
    pub library_len: usize,
    pub predictor_loss: f64,
    /// Mean predictor score of the generator's last batch.
    pub generator_score: f64,
    pub evaluated: usize,
    pub admitted: usize,
    pub zoo_len: usize,
}

#[derive(Clone, Debug)]
pub struct MiningOutcome {
    pub zoo: FactorZoo,
    pub rounds: Vec<RoundStats>,
    pub reached_target: bool,
}

struct Miner<'a> {
    cfg: &'a MinerConfig,
    ctx: EvalContext<'a>,
    grammar: Grammar,
    zoo: FactorZoo,
    library: SampleLibrary,
    cache: ExprCache,
    round: usize,
}

/// Correlations are measured on `rows`, matching the training metrics.
fn extend_psi(item: &mut CacheItem, values: &Array2<f64>, zoo: &FactorZoo, rows: Range<usize>) {
    for m in &zoo.entries()[item.psi_members..] {
        let c = mean_daily_correlation(&values.view(), &m.values.view(), rows.clone()).abs();
        item.psi = item.psi.max(c);
    }
    item.psi_members = zoo.len();
}

impl<'a> Miner<'a> {
    fn corr_cap(&self) -> f64 {
        self.cfg.fitness.corr_cap
    }

    /// Brings every library entry's fitness up to date with the zoo.
    fn refresh_fitness(&mut self) {
        let n = self.zoo.len();
        let cap = self.corr_cap();
        let stale: Vec<usize> = (0..self.cache.len())
            .filter(|&k| {
                let it = &self.cache.items[k];
                it.psi_members < n && it.fitness(cap) > 0.0
            })
            .collect();
        let (ctx, zoo, items) = (&self.ctx, &self.zoo, &self.cache.items);
        let updated: Vec<CacheItem> = stale
            .par_iter()
            .map(|&k| {
                let mut it = items[k].clone();
                let values = ctx.evaluator.values(&it.expr);
                extend_psi(&mut it, &values, zoo, ctx.rows.clone());
                it
            })
            .collect();
        for (k, it) in stale.into_iter().zip(updated) {
            self.cache.items[k] = it;
        }
        for k in 0..self.cache.len() {
            if self.cache.items[k].fitness(cap) == 0.0 {
                self.cache.items[k].psi_members = n;
            }
        }
        let items = &self.cache.items;
        for e in self.library.entries_mut() {
            e.fitness = items[e.key].fitness(cap);
        }
    }

    /// Looks up or evaluates each program, admits qualified ones in order
    /// while the zoo is below `target`, and appends every program to the
    /// library. Returns (formulas evaluated, factors admitted).
    fn harvest(&mut self, programs: &[Vec<usize>], target: usize) -> (usize, usize) {
        enum Slot {
            Cached(usize),
            Fresh(usize),
        }
        let vocab = self.grammar.vocab();
        let s = self.grammar.max_len();
        let mut slots = Vec::with_capacity(programs.len());
        let mut fresh: Vec<(crate::dsl::Expr, String)> = Vec::new();
        let mut pending: HashMap<String, usize> = HashMap::new();
        for idx in programs {
            let expr = program_from_indices(idx, vocab, s).expect("masked programs decode").decode();
            let text = expr.to_string();
            if let Some(k) = self.cache.key(&text) {
                slots.push(Slot::Cached(k));
            } else if let Some(&j) = pending.get(&text) {
                slots.push(Slot::Fresh(j));
            } else {
                pending.insert(text.clone(), fresh.len());
                slots.push(Slot::Fresh(fresh.len()));
                fresh.push((expr, text));
            }
        }

        let snap = self.zoo.len();
        let (ctx, zoo) = (&self.ctx, &self.zoo);
        let evaluated: Vec<_> = fresh
            .par_iter()
            .map(|(expr, _)| {
                let c = ctx.assess(expr);
                let psi = if c.metrics.is_defined() { zoo.psi(&c.values.view(), ctx.rows.clone()) } else { 0.0 };
                (c, psi)
            })
            .collect();

        let mut admitted = 0;
        let mut scored = Vec::with_capacity(evaluated.len());
        for (c, psi) in evaluated {
            let defined = c.metrics.is_defined();
            let mut item = CacheItem { expr: c.expr.clone(), ic: c.metrics.ic.abs(), psi, psi_members: snap };
            if defined {
                extend_psi(&mut item, &c.values, &self.zoo, self.ctx.rows.clone());
            } else {
                item.psi_members = self.zoo.len();
            }
            if self.zoo.len() < target {
                let q = qualify_with(&c, &self.zoo, &self.cfg.fitness, || item.psi);
                if q.accepted {
                    info!("admitted {} (|IC| {:.4}, ψ {:.3})", c.text, item.ic, q.psi);
                    self.zoo.admit(c.clone(), q.sign, q.psi, self.round);
                    admitted += 1;
                }
            }
            scored.push((c, item));
        }
        let n_fresh = scored.len();
        let mut ids = Vec::with_capacity(n_fresh);
        for ((_, text), (c, mut item)) in fresh.into_iter().zip(scored) {
            // catch up with factors admitted later in this batch (or itself)
            if item.psi_members < self.zoo.len() && c.metrics.is_defined() {
                extend_psi(&mut item, &c.values, &self.zoo, self.ctx.rows.clone());
            }
            ids.push(self.cache.insert(text, item));
        }
        let cap = self.corr_cap();
        for (idx, slot) in programs.iter().zip(slots) {
            let k = match slot {
                Slot::Cached(k) => k,
                Slot::Fresh(j) => ids[j],
            };
            let f = self.cache.items[k].fitness(cap);
            self.library.push(idx, f, k);
        }
        (n_fresh, admitted)
    }
}

/// Runs the mining loop on the panel's label over `range`.
pub fn run_mining(panel: &PanelData, range: &DateRange, cfg: &MinerConfig) -> Result<MiningOutcome, MinerError> {
    let rows = panel.rows(range)?;
    run_mining_rows(panel, rows, cfg)
}

pub fn run_mining_rows(panel: &PanelData, rows: Range<usize>, cfg: &MinerConfig) -> Result<MiningOutcome, MinerError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(MinerError::Config(errs));
    }
    let vocab = Vocabulary::default();
    let max_window = vocab
        .tokens()
        .iter()
        .filter_map(|t| match t {
            crate::dsl::Token::Window(w) => Some(*w),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let needed = max_window + cfg.label_horizon;
    if rows.len() < needed {
        return Err(MinerError::ShortRange { days: rows.len(), needed });
    }
    let grammar = Grammar::new(vocab.clone(), cfg.max_len);
    let mut miner = Miner {
        cfg,
        ctx: EvalContext::new(panel, rows.clone()),
        grammar,
        zoo: FactorZoo::new(vocab.clone(), cfg.max_len),
        library: SampleLibrary::new(vocab.len(), cfg.max_len, cfg.library_cap),
        cache: ExprCache::default(),
        round: 0,
    };
    if cfg.target_factors == 0 {
        return Ok(MiningOutcome { zoo: miner.zoo, rounds: Vec::new(), reached_target: true });
    }

    let mut init = substream(cfg.seed, "miner.library");
    let programs: Vec<Vec<usize>> = (0..cfg.library_size)
        .map(|_| token_indices(&miner.grammar.sample_random(&mut init), &vocab).expect("vocabulary tokens"))
        .collect();
    let target = cfg.target_factors;
    let mut rounds = Vec::new();
    let mut round_no = 0;
    miner.harvest(&programs, 0);

    while miner.zoo.len() < target && round_no < cfg.rounds {
        round_no += 1;
        miner.round = round_no;
        miner.refresh_fitness();
        let mut rng = substream(cfg.seed, &format!("miner.round{round_no}"));
        let mut p = Mlp::new(cfg.predictor_spec(vocab.len()), &mut rng)?;
        let mut g = Mlp::new(cfg.generator_spec(vocab.len()), &mut rng)?;
        let mut p_opt = Adam::new(cfg.optimizer);
        let mut g_opt = Adam::new(cfg.optimizer);
        let fit = train_predictor(&mut p, &mut p_opt, &miner.library, cfg.predictor_epochs, cfg.batch_size, &mut rng)?;
        let before = miner.zoo.len();
        let mut evaluated = 0;
        let mut score = f64::NAN;
        for _ in 0..cfg.epochs {
            let (pass, _) = generator_step(&mut g, &mut g_opt, &p, &miner.grammar, &cfg.objective(), cfg.batch_size, &mut rng)?;
            score = pass.mean_score;
            let progs: Vec<Vec<usize>> = pass.programs().map(<[usize]>::to_vec).collect();
            let (e, _) = miner.harvest(&progs, target);
            evaluated += e;
            if miner.zoo.len() >= target {
                break;
            }
        }
        let stats = RoundStats {
            round: round_no,
            library_len: miner.library.len(),
            predictor_loss: fit.final_loss,
            generator_score: score,
            evaluated,
            admitted: miner.zoo.len() - before,
            zoo_len: miner.zoo.len(),
        };
        info!(
            "round {}: library {}, P loss {:.4}, G score {:.4}, {} new formulas, zoo {}",
            stats.round, stats.library_len, stats.predictor_loss, stats.generator_score, stats.evaluated, stats.zoo_len
        );
        rounds.push(stats);
    }
    let reached_target = miner.zoo.len() >= target;
    if !reached_target {
        warn!("round budget exhausted with {} of {} factors", miner.zoo.len(), target);
    }
    Ok(MiningOutcome { zoo: miner.zoo, rounds, reached_target })
}
