use std::fmt;

use super::token::{BinaryOp, Feature, PairRollingOp, RollingOp, UnaryOp};

/// Formula syntax tree. Leaves are features or constants; rolling nodes
/// carry their window length.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Feature(Feature),
    Constant(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Rolling(RollingOp, Box<Expr>, usize),
    PairRolling(PairRollingOp, Box<Expr>, Box<Expr>, usize),
}

impl Expr {
    pub fn feature(f: Feature) -> Expr {
        Expr::Feature(f)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Constant(c)
    }

    pub fn unary(op: UnaryOp, x: Expr) -> Expr {
        Expr::Unary(op, Box::new(x))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn rolling(op: RollingOp, x: Expr, window: usize) -> Expr {
        Expr::Rolling(op, Box::new(x), window)
    }

    pub fn pair_rolling(op: PairRollingOp, a: Expr, b: Expr, window: usize) -> Expr {
        Expr::PairRolling(op, Box::new(a), Box::new(b), window)
    }

    /// Number of tokens in the post-order encoding, end marker excluded.
    pub fn rpn_len(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Constant(_) => 1,
            Expr::Unary(_, x) => x.rpn_len() + 1,
            Expr::Binary(_, a, b) => a.rpn_len() + b.rpn_len() + 1,
            Expr::Rolling(_, x, _) => x.rpn_len() + 2,
            Expr::PairRolling(_, a, b, _) => a.rpn_len() + b.rpn_len() + 2,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Constant(_) => 1,
            Expr::Unary(_, x) | Expr::Rolling(_, x, _) => x.depth() + 1,
            Expr::Binary(_, a, b) | Expr::PairRolling(_, a, b, _) => a.depth().max(b.depth()) + 1,
        }
    }

    /// Longest trailing history any node needs, in days.
    pub fn max_lookback(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Constant(_) => 0,
            Expr::Unary(_, x) => x.max_lookback(),
            Expr::Binary(_, a, b) => a.max_lookback().max(b.max_lookback()),
            Expr::Rolling(_, x, w) => x.max_lookback() + w,
            Expr::PairRolling(_, a, b, w) => a.max_lookback().max(b.max_lookback()) + w,
        }
    }

    /// True when at least one feature leaf is present.
    pub fn uses_features(&self) -> bool {
        match self {
            Expr::Feature(_) => true,
            Expr::Constant(_) => false,
            Expr::Unary(_, x) | Expr::Rolling(_, x, _) => x.uses_features(),
            Expr::Binary(_, a, b) | Expr::PairRolling(_, a, b, _) => {
                a.uses_features() || b.uses_features()
            }
        }
    }
}

/// Normalized text form; this string is also the zoo identity of a formula.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Feature(x) => f.write_str(x.name()),
            Expr::Constant(c) => write!(f, "{c:?}"),
            Expr::Unary(op, x) => write!(f, "{}({x})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            Expr::Rolling(op, x, w) => write!(f, "{}({x},{w})", op.name()),
            Expr::PairRolling(op, a, b, w) => write!(f, "{}({a},{b},{w})", op.name()),
        }
    }
}
