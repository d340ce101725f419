//! Token vocabulary for formula programs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The six raw per-stock features available to every formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Open,
    High,
    Low,
    Close,
    Volume,
    Vwap,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Open,
        Feature::High,
        Feature::Low,
        Feature::Close,
        Feature::Volume,
        Feature::Vwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Open => "open",
            Feature::High => "high",
            Feature::Low => "low",
            Feature::Close => "close",
            Feature::Volume => "volume",
            Feature::Vwap => "vwap",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        let name = name.strip_prefix('$').unwrap_or(name);
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn is_price(self) -> bool {
        !matches!(self, Feature::Volume)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Abs,
    #[serde(rename = "S_log1p")]
    SLog1p,
    Inv,
    Neg,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Abs, UnaryOp::SLog1p, UnaryOp::Inv, UnaryOp::Neg];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Abs => "Abs",
            UnaryOp::SLog1p => "S_log1p",
            UnaryOp::Inv => "Inv",
            UnaryOp::Neg => "Neg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "Add",
            BinaryOp::Sub => "Sub",
            BinaryOp::Mul => "Mul",
            BinaryOp::Div => "Div",
            BinaryOp::Pow => "Pow",
        }
    }

    /// Infix spelling used by the text syntax.
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "**",
        }
    }
}

/// Operators over a trailing window of a single series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RollingOp {
    Ref,
    #[serde(rename = "ts_mean")]
    Mean,
    #[serde(rename = "ts_sum")]
    Sum,
    #[serde(rename = "ts_std")]
    Std,
    #[serde(rename = "ts_var")]
    Var,
    #[serde(rename = "ts_min")]
    Min,
    #[serde(rename = "ts_max")]
    Max,
    #[serde(rename = "ts_mad")]
    Mad,
    #[serde(rename = "ts_delta")]
    Delta,
}

impl RollingOp {
    pub const ALL: [RollingOp; 9] = [
        RollingOp::Ref,
        RollingOp::Mean,
        RollingOp::Sum,
        RollingOp::Std,
        RollingOp::Var,
        RollingOp::Min,
        RollingOp::Max,
        RollingOp::Mad,
        RollingOp::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RollingOp::Ref => "Ref",
            RollingOp::Mean => "ts_mean",
            RollingOp::Sum => "ts_sum",
            RollingOp::Std => "ts_std",
            RollingOp::Var => "ts_var",
            RollingOp::Min => "ts_min",
            RollingOp::Max => "ts_max",
            RollingOp::Mad => "ts_mad",
            RollingOp::Delta => "ts_delta",
        }
    }
}

/// Operators over a trailing window of a pair of series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairRollingOp {
    #[serde(rename = "ts_corr")]
    Corr,
    #[serde(rename = "ts_cov")]
    Cov,
}

impl PairRollingOp {
    pub const ALL: [PairRollingOp; 2] = [PairRollingOp::Corr, PairRollingOp::Cov];

    pub fn name(self) -> &'static str {
        match self {
            PairRollingOp::Corr => "ts_corr",
            PairRollingOp::Cov => "ts_cov",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Feature,
    Constant,
    Window,
    Unary,
    Binary,
    Rolling,
    PairRolling,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Token {
    Feature(Feature),
    Constant(f64),
    Window(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
    Rolling(RollingOp),
    PairRolling(PairRollingOp),
    End,
}

impl Token {
    pub fn kind(&self) -> TokenKind {
        match self {
            Token::Feature(_) => TokenKind::Feature,
            Token::Constant(_) => TokenKind::Constant,
            Token::Window(_) => TokenKind::Window,
            Token::Unary(_) => TokenKind::Unary,
            Token::Binary(_) => TokenKind::Binary,
            Token::Rolling(_) => TokenKind::Rolling,
            Token::PairRolling(_) => TokenKind::PairRolling,
            Token::End => TokenKind::End,
        }
    }

    /// Bitwise comparison so that constants match exactly.
    fn same_as(&self, other: &Token) -> bool {
        match (self, other) {
            (Token::Constant(a), Token::Constant(b)) => a.to_bits() == b.to_bits(),
            _ => self == other,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Feature(x) => f.write_str(x.name()),
            Token::Constant(c) => write!(f, "{c:?}"),
            Token::Window(w) => write!(f, "win{w}"),
            Token::Unary(op) => f.write_str(op.name()),
            Token::Binary(op) => f.write_str(op.name()),
            Token::Rolling(op) => f.write_str(op.name()),
            Token::PairRolling(op) => f.write_str(op.name()),
            Token::End => f.write_str("END"),
        }
    }
}

pub const DEFAULT_WINDOWS: [usize; 7] = [1, 5, 10, 20, 30, 40, 50];

pub const DEFAULT_CONSTANTS: [f64; 14] = [
    -30.0, -10.0, -5.0, -2.0, -1.0, -0.5, -0.01, 0.01, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0,
];

/// Ordered token list; the row order of the one-hot encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    tokens: Vec<Token>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::with_menus(&DEFAULT_CONSTANTS, &DEFAULT_WINDOWS)
    }
}

impl Vocabulary {
    /// Builds the canonical vocabulary: features, constants, windows, every
    /// operator, then the end marker.
    pub fn with_menus(constants: &[f64], windows: &[usize]) -> Vocabulary {
        let mut tokens: Vec<Token> = Feature::ALL.into_iter().map(Token::Feature).collect();
        tokens.extend(constants.iter().map(|&c| Token::Constant(c)));
        tokens.extend(windows.iter().filter(|&&w| w >= 1).map(|&w| Token::Window(w)));
        tokens.extend(UnaryOp::ALL.into_iter().map(Token::Unary));
        tokens.extend(BinaryOp::ALL.into_iter().map(Token::Binary));
        tokens.extend(RollingOp::ALL.into_iter().map(Token::Rolling));
        tokens.extend(PairRollingOp::ALL.into_iter().map(Token::PairRolling));
        tokens.push(Token::End);
        Vocabulary { tokens }
    }

    /// Wraps an explicit token list, checking that it holds every feature and
    /// operator and exactly one end marker.
    pub fn from_tokens(tokens: Vec<Token>) -> Result<Vocabulary, String> {
        let has = |t: Token| tokens.iter().any(|x| x.same_as(&t));
        let mut missing: Vec<String> = Vec::new();
        for t in Feature::ALL.map(Token::Feature)
            .into_iter()
            .chain(UnaryOp::ALL.map(Token::Unary))
            .chain(BinaryOp::ALL.map(Token::Binary))
            .chain(RollingOp::ALL.map(Token::Rolling))
            .chain(PairRollingOp::ALL.map(Token::PairRolling))
        {
            if !has(t) {
                missing.push(t.to_string());
            }
        }
        if !missing.is_empty() {
            return Err(format!("vocabulary lacks {}", missing.join(", ")));
        }
        let ends = tokens.iter().filter(|t| matches!(t, Token::End)).count();
        if ends != 1 {
            return Err(format!("vocabulary must contain one end marker, found {ends}"));
        }
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].iter().any(|x| x.same_as(t)) {
                return Err(format!("duplicate token {t}"));
            }
            if matches!(t, Token::Window(0)) {
                return Err("window length must be at least 1".into());
            }
        }
        Ok(Vocabulary { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, index: usize) -> Token {
        self.tokens[index]
    }

    pub fn index_of(&self, token: &Token) -> Option<usize> {
        self.tokens.iter().position(|t| t.same_as(token))
    }

    pub fn end_index(&self) -> usize {
        self.tokens
            .iter()
            .position(|t| matches!(t, Token::End))
            .expect("vocabulary holds an end marker")
    }
}
