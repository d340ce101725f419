use ndarray::{Array2, ArrayView2};

use super::rpn::{rpn_decode, RpnProgram};
use super::token::{Token, Vocabulary};
use super::DslError;

/// `D × S` binary matrix; column `k` selects the token at slot `k`, and every
/// slot after the end marker is the end marker.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotMatrix(Array2<f64>);

impl OneHotMatrix {
    pub fn as_array(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Row index selected in every column.
    pub fn indices(&self) -> Vec<usize> {
        column_argmax(&self.0.view())
    }
}

/// Vocabulary row of each token, padded with the end marker to `max_len`.
pub fn token_indices(prog: &RpnProgram, vocab: &Vocabulary) -> Result<Vec<usize>, DslError> {
    let mut idx = Vec::with_capacity(prog.max_len());
    for tok in prog.tokens() {
        let i = vocab
            .index_of(tok)
            .ok_or_else(|| DslError::NotInVocabulary { token: tok.to_string() })?;
        idx.push(i);
    }
    let end = vocab.end_index();
    idx.resize(prog.max_len(), end);
    Ok(idx)
}

pub fn to_onehot(prog: &RpnProgram, vocab: &Vocabulary) -> Result<OneHotMatrix, DslError> {
    let idx = token_indices(prog, vocab)?;
    let mut m = Array2::zeros((vocab.len(), prog.max_len()));
    for (col, &row) in idx.iter().enumerate() {
        m[[row, col]] = 1.0;
    }
    Ok(OneHotMatrix(m))
}

/// Column-wise argmax, ties to the lowest row.
pub fn column_argmax(x: &ArrayView2<f64>) -> Vec<usize> {
    x.columns()
        .into_iter()
        .map(|col| {
            let mut best = 0;
            for (i, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Reads a program back from any real `D × S` matrix by column argmax,
/// truncating at the first end marker.
pub fn from_onehot(x: &ArrayView2<f64>, vocab: &Vocabulary) -> Result<RpnProgram, DslError> {
    if x.nrows() != vocab.len() {
        return Err(DslError::Shape { expected: vocab.len(), found: x.nrows() });
    }
    let max_len = x.ncols();
    program_from_indices(&column_argmax(x), vocab, max_len)
}

pub fn program_from_indices(
    idx: &[usize],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<RpnProgram, DslError> {
    let mut tokens: Vec<Token> = Vec::with_capacity(idx.len());
    for &i in idx {
        let t = vocab.token(i);
        tokens.push(t);
        if t == Token::End {
            break;
        }
    }
    rpn_decode(&tokens)?;
    RpnProgram::new(tokens, max_len)
}
