use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore};

use crate::dsl::{Grammar, PrefixState};

/// Output of the masked sampler for one `D × S` logit matrix.
#[derive(Clone, Debug)]
pub struct GumbelSample {
    /// Column-wise softmax of `(logit + noise) / τ` over the legal rows.
    pub relaxed: Array2<f64>,
    /// Column-wise argmax of `relaxed`.
    pub hard: Array2<f64>,
    /// Row picked in each column.
    pub indices: Vec<usize>,
    pub mask: Array2<bool>,
    pub noise: Array2<f64>,
    pub tau: f64,
}

fn gumbel_noise<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

fn softmax_column(logits: &ArrayView2<f64>, mask: &Array2<bool>, noise: &Array2<f64>, tau: f64, col: usize, out: &mut Array2<f64>) {
    let d = logits.nrows();
    let mut top = f64::NEG_INFINITY;
    for r in 0..d {
        if mask[[r, col]] {
            top = top.max((logits[[r, col]] + noise[[r, col]]) / tau);
        }
    }
    let mut total = 0.0;
    for r in 0..d {
        let e = if mask[[r, col]] { ((logits[[r, col]] + noise[[r, col]]) / tau - top).exp() } else { 0.0 };
        out[[r, col]] = e;
        total += e;
    }
    for r in 0..d {
        out[[r, col]] /= total;
    }
}

/// Samples a program column by column. The legality mask of column `k`
/// follows from the hard choices in columns `< k`; illegal rows get zero
/// probability. `noise = None` gives the plain masked softmax/argmax.
///
/// # Panics
/// If `tau` is not positive or the logits do not have one row per token.
pub fn gumbel_softmax_masked<R: RngCore + ?Sized>(
    logits: &ArrayView2<f64>,
    grammar: &Grammar,
    tau: f64,
    mut noise: Option<&mut R>,
) -> GumbelSample {
    assert!(tau > 0.0, "temperature must be positive");
    let (d, s) = logits.dim();
    assert_eq!(d, grammar.vocab().len(), "one logit row per token");
    assert_eq!(s, grammar.max_len(), "one logit column per program slot");
    let mut mask = Array2::from_elem((d, s), false);
    let mut g = Array2::zeros((d, s));
    let mut relaxed = Array2::zeros((d, s));
    let mut hard = Array2::zeros((d, s));
    let mut indices = Vec::with_capacity(s);
    let mut state = PrefixState::EMPTY;
    let mut col_mask = vec![false; d];
    for k in 0..s {
        grammar.fill_mask(state, k, &mut col_mask);
        if state == PrefixState::Ended {
            col_mask.iter_mut().for_each(|m| *m = false);
            col_mask[grammar.vocab().end_index()] = true;
        }
        for r in 0..d {
            mask[[r, k]] = col_mask[r];
            if let Some(rng) = noise.as_deref_mut() {
                // drawn for every cell so the stream does not depend on the mask
                let e = gumbel_noise(rng);
                if col_mask[r] {
                    g[[r, k]] = e;
                }
            }
        }
        softmax_column(logits, &mask, &g, tau, k, &mut relaxed);
        let mut best = usize::MAX;
        for r in 0..d {
            if mask[[r, k]] && (best == usize::MAX || relaxed[[r, k]] > relaxed[[best, k]]) {
                best = r;
            }
        }
        hard[[best, k]] = 1.0;
        indices.push(best);
        state = state.step(grammar.kinds()[best]);
    }
    GumbelSample { relaxed, hard, indices, mask, noise: g, tau }
}

/// The relaxed matrix for fixed masks and noise; the differentiable part of
/// the sampler.
pub fn relaxed_given(logits: &ArrayView2<f64>, mask: &Array2<bool>, noise: &Array2<f64>, tau: f64) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for k in 0..logits.ncols() {
        softmax_column(logits, mask, noise, tau, k, &mut out);
    }
    out
}

/// Pulls a gradient on the relaxed matrix back to the logits, column by
/// column through the softmax: `dℓ_j = y_j (g_j − Σ_k y_k g_k) / τ`.
pub fn gumbel_backward(sample: &GumbelSample, d_relaxed: &ArrayView2<f64>) -> Array2<f64> {
    let y = &sample.relaxed;
    let mut out = Array2::zeros(y.raw_dim());
    for k in 0..y.ncols() {
        let inner: f64 = (0..y.nrows()).map(|r| y[[r, k]] * d_relaxed[[r, k]]).sum();
        for r in 0..y.nrows() {
            out[[r, k]] = y[[r, k]] * (d_relaxed[[r, k]] - inner) / sample.tau;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{from_onehot, Vocabulary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn columns_are_distributions() {
        let g = Grammar::new(Vocabulary::default(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = Array2::from_shape_fn((g.vocab().len(), 8), |(r, c)| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let s = gumbel_softmax_masked(&logits.view(), &g, 1.0, Some(&mut rng));
        for k in 0..8 {
            let col = s.relaxed.column(k);
            assert!((col.sum() - 1.0).abs() < 1e-12);
            for r in 0..col.len() {
                if !s.mask[[r, k]] {
                    assert_eq!(col[r], 0.0);
                }
            }
        }
        assert!(from_onehot(&s.hard.view(), g.vocab()).is_ok());
    }

    #[test]
    fn noiseless_low_temperature_is_masked_argmax() {
        let g = Grammar::new(Vocabulary::default(), 6);
        let logits = Array2::from_shape_fn((g.vocab().len(), 6), |(r, c)| ((r * 31 + c * 17) % 13) as f64);
        let s = gumbel_softmax_masked(&logits.view(), &g, 1e-6, None::<&mut ChaCha8Rng>);
        let mut state = PrefixState::EMPTY;
        for k in 0..6 {
            let m = g.mask_for_state(state, k);
            let want = (0..m.len())
                .filter(|&r| m[r] || (state == PrefixState::Ended && r == g.vocab().end_index()))
                .fold(None::<usize>, |b, r| match b {
                    Some(b) if logits[[b, k]] >= logits[[r, k]] => Some(b),
                    _ => Some(r),
                })
                .unwrap();
            assert_eq!(s.indices[k], want);
            state = state.step(g.kinds()[want]);
        }
    }
}
