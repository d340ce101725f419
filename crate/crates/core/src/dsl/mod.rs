//! Formula grammar: tokens, syntax trees, text parsing, post-order (RPN)
//! encoding, one-hot matrices and the legality mask used while sampling.

mod expr;
mod mask;
mod onehot;
mod parse;
mod rpn;
mod token;

pub use expr::Expr;
pub use mask::{legality_mask, sample_random, Grammar, PrefixState};
pub use onehot::{column_argmax, from_onehot, program_from_indices, to_onehot, token_indices, OneHotMatrix};
pub use parse::parse_text;
pub use rpn::{rpn_decode, rpn_encode, RpnProgram};
pub use token::{
    BinaryOp, Feature, PairRollingOp, RollingOp, Token, TokenKind, UnaryOp, Vocabulary,
    DEFAULT_CONSTANTS, DEFAULT_WINDOWS,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("invalid program: stack underflow at position {position} ({token})")]
    StackUnderflow { position: usize, token: String },
    #[error("invalid program: {count} values left on the stack at the end marker (position {position})")]
    DanglingOperands { position: usize, count: usize },
    #[error("grammar error at position {position}: {message}")]
    Grammar { position: usize, message: String },
    #[error("invalid program: no end marker")]
    MissingEnd,
    #[error("program of length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("window length {window} is invalid")]
    InvalidWindow { window: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown operator `{name}` at byte {offset}")]
    UnknownOperator { offset: usize, name: String },
    #[error("{name} takes {expected} arguments, found {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("token {token} is not in the vocabulary")]
    NotInVocabulary { token: String },
    #[error("one-hot matrix has {found} rows, vocabulary has {expected}")]
    Shape { expected: usize, found: usize },
}
