use std::collections::{HashMap, VecDeque};

use ndarray::Array2;

use crate::dsl::Expr;

/// A generated or random program and its fitness against the zoo.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    /// Vocabulary row of every column of the one-hot matrix.
    pub indices: Vec<u16>,
    pub fitness: f64,
    pub(crate) key: usize,
}

/// The sample library R with its fitness labels, bounded FIFO.
#[derive(Clone, Debug)]
pub struct SampleLibrary {
    vocab_len: usize,
    max_len: usize,
    cap: usize,
    entries: VecDeque<LibraryEntry>,
}

impl SampleLibrary {
    pub fn new(vocab_len: usize, max_len: usize, cap: usize) -> SampleLibrary {
        SampleLibrary { vocab_len, max_len, cap: cap.max(1), entries: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn entries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> &LibraryEntry {
        &self.entries[i]
    }

    /// Appends, dropping the oldest entry once the cap is reached.
    pub fn push(&mut self, indices: &[usize], fitness: f64, key: usize) {
        if self.entries.len() == self.cap {
            self.entries.pop_front();
        }
        self.entries.push_back(LibraryEntry { indices: indices.iter().map(|&i| i as u16).collect(), fitness, key });
    }

    /// New entries for tests and callers outside mining.
    pub fn push_scored(&mut self, indices: &[usize], fitness: f64) {
        self.push(indices, fitness, usize::MAX);
    }

    pub fn fitness(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.fitness).collect()
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = &mut LibraryEntry> {
        self.entries.iter_mut()
    }

    /// Input columns that are 1 in the flattened one-hot of entry `i`.
    pub fn active_columns(&self, i: usize) -> Vec<usize> {
        self.entries[i].indices.iter().enumerate().map(|(s, &d)| d as usize * self.max_len + s).collect()
    }

    pub fn onehot(&self, i: usize) -> Array2<f64> {
        let mut m = Array2::zeros((self.vocab_len, self.max_len));
        for (s, &d) in self.entries[i].indices.iter().enumerate() {
            m[[d as usize, s]] = 1.0;
        }
        m
    }
}

/// What is known about one distinct (normalized) formula.
#[derive(Clone, Debug)]
pub(crate) struct CacheItem {
    pub expr: Expr,
    /// |IC| on the training rows; NaN when undefined.
    pub ic: f64,
    /// ψ against the first `psi_members` zoo entries.
    pub psi: f64,
    pub psi_members: usize,
}

impl CacheItem {
    pub fn fitness(&self, corr_cap: f64) -> f64 {
        if self.ic.is_nan() || self.psi >= corr_cap {
            0.0
        } else {
            self.ic
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct ExprCache {
    by_text: HashMap<String, usize>,
    pub items: Vec<CacheItem>,
}

impl ExprCache {
    pub fn key(&self, text: &str) -> Option<usize> {
        self.by_text.get(text).copied()
    }

    pub fn insert(&mut self, text: String, item: CacheItem) -> usize {
        let k = self.items.len();
        self.by_text.insert(text, k);
        self.items.push(item);
        k
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }
}
