//! Stack automaton that decides which tokens may extend a partial program.
//!
//! A prefix is summarised by its value-stack depth, whether a window token
//! is waiting for its rolling operator, and whether the end marker has been
//! emitted. For every state the automaton knows the fewest tokens (end marker
//! included) needed to finish a valid program, so a token is legal exactly
//! when the state it produces can still finish within the remaining slots.

use rand::Rng;

use super::rpn::RpnProgram;
use super::token::{Token, TokenKind, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrefixState {
    Open { depth: usize, pending_window: bool },
    Ended,
    /// The prefix already violates the grammar.
    Broken,
}

impl PrefixState {
    pub const EMPTY: PrefixState = PrefixState::Open { depth: 0, pending_window: false };

    pub fn step(self, kind: TokenKind) -> PrefixState {
        use PrefixState::*;
        use TokenKind as K;
        match self {
            Broken => Broken,
            Ended => {
                if kind == K::End {
                    Ended
                } else {
                    Broken
                }
            }
            Open { depth, pending_window: true } => match kind {
                K::Rolling if depth >= 1 => Open { depth, pending_window: false },
                K::PairRolling if depth >= 2 => Open { depth: depth - 1, pending_window: false },
                _ => Broken,
            },
            Open { depth, pending_window: false } => match kind {
                K::Feature | K::Constant => Open { depth: depth + 1, pending_window: false },
                K::Window if depth >= 1 => Open { depth, pending_window: true },
                K::Unary if depth >= 1 => Open { depth, pending_window: false },
                K::Binary if depth >= 2 => Open { depth: depth - 1, pending_window: false },
                K::End if depth == 1 => Ended,
                _ => Broken,
            },
        }
    }

    pub fn of(tokens: &[Token]) -> PrefixState {
        tokens.iter().fold(PrefixState::EMPTY, |s, t| s.step(t.kind()))
    }
}

/// Legality oracle for one vocabulary and maximum length.
#[derive(Clone, Debug)]
pub struct Grammar {
    vocab: Vocabulary,
    max_len: usize,
    kinds: Vec<TokenKind>,
    // finish[depth][pending] = fewest tokens to reach Ended, usize::MAX if unreachable
    finish: Vec<[usize; 2]>,
}

impl Grammar {
    pub fn new(vocab: Vocabulary, max_len: usize) -> Grammar {
        let kinds: Vec<TokenKind> = vocab.tokens().iter().map(Token::kind).collect();
        let mut distinct: Vec<TokenKind> = Vec::new();
        for k in &kinds {
            if !distinct.contains(k) {
                distinct.push(*k);
            }
        }
        // depth can never usefully exceed max_len
        let cap = max_len + 1;
        let mut finish = vec![[usize::MAX; 2]; cap + 1];
        // Bellman-Ford style relaxation over a small state graph.
        loop {
            let mut changed = false;
            for depth in 0..=cap {
                for pending in [false, true] {
                    let state = PrefixState::Open { depth, pending_window: pending };
                    let mut best = finish[depth][pending as usize];
                    for &k in &distinct {
                        let cost = match state.step(k) {
                            PrefixState::Ended => 1,
                            PrefixState::Open { depth: d, pending_window: p } if d <= cap => {
                                finish[d][p as usize].saturating_add(1)
                            }
                            _ => usize::MAX,
                        };
                        best = best.min(cost);
                    }
                    if best < finish[depth][pending as usize] {
                        finish[depth][pending as usize] = best;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Grammar { vocab, max_len, kinds, finish }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn kinds(&self) -> &[TokenKind] {
        &self.kinds
    }

    /// Tokens still needed to finish from `state`, end marker included.
    pub fn tokens_to_finish(&self, state: PrefixState) -> usize {
        match state {
            PrefixState::Ended => 0,
            PrefixState::Broken => usize::MAX,
            PrefixState::Open { depth, pending_window } => self
                .finish
                .get(depth)
                .map(|f| f[pending_window as usize])
                .unwrap_or(usize::MAX),
        }
    }

    /// Legal next tokens for a prefix of `len` tokens in `state`.
    pub fn mask_for_state(&self, state: PrefixState, len: usize) -> Vec<bool> {
        let mut out = vec![false; self.kinds.len()];
        self.fill_mask(state, len, &mut out);
        out
    }

    pub fn fill_mask(&self, state: PrefixState, len: usize, out: &mut [bool]) {
        if len >= self.max_len {
            out.iter_mut().for_each(|m| *m = false);
            return;
        }
        let remaining = self.max_len - len - 1;
        for (m, &k) in out.iter_mut().zip(&self.kinds) {
            *m = self.tokens_to_finish(state.step(k)) <= remaining;
        }
    }

    pub fn mask(&self, prefix: &[Token]) -> Vec<bool> {
        self.mask_for_state(PrefixState::of(prefix), prefix.len())
    }

    /// Draws a program by picking uniformly among legal tokens at each slot.
    pub fn sample_random<R: Rng + ?Sized>(&self, rng: &mut R) -> RpnProgram {
        let mut state = PrefixState::EMPTY;
        let mut tokens = Vec::with_capacity(self.max_len);
        let mut mask = vec![false; self.kinds.len()];
        while state != PrefixState::Ended {
            self.fill_mask(state, tokens.len(), &mut mask);
            let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            assert!(!legal.is_empty(), "sampling reached an unextendable prefix");
            let pick = legal[rng.random_range(0..legal.len())];
            state = state.step(self.kinds[pick]);
            tokens.push(self.vocab.token(pick));
        }
        RpnProgram::new(tokens, self.max_len).expect("masked sampling yields valid programs")
    }
}

/// Boolean vector over `vocab`: which tokens keep `prefix` completable within
/// `max_len` slots.
pub fn legality_mask(prefix: &[Token], max_len: usize, vocab: &Vocabulary) -> Vec<bool> {
    Grammar::new(vocab.clone(), max_len).mask(prefix)
}

pub fn sample_random<R: Rng + ?Sized>(vocab: &Vocabulary, max_len: usize, rng: &mut R) -> RpnProgram {
    assert!(max_len >= 2, "programs need room for a leaf and the end marker");
    Grammar::new(vocab.clone(), max_len).sample_random(rng)
}
