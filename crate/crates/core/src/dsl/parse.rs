//! Text syntax for formulas, e.g. `S_log1p((-10.0-ts_corr((close+0.01),(0.5+volume),30)))`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('**' unary)?
//! primary := number | name | name '(' args ')' | '(' sum ')'
//! ```
//!
//! A `-` directly followed by a numeric literal is read as a negative
//! constant, so `(x--30.0)` is `x - (-30.0)`. Any other unary minus becomes
//! `Neg`. Windows are the trailing integer argument of `ts_*` and `Ref`.

use super::expr::Expr;
use super::token::{BinaryOp, Feature, PairRollingOp, RollingOp, UnaryOp};
use super::DslError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Pow,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, DslError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            b',' => out.push((Tok::Comma, start)),
            b'+' => out.push((Tok::Plus, start)),
            b'-' => out.push((Tok::Minus, start)),
            b'/' => out.push((Tok::Slash, start)),
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    out.push((Tok::Pow, start));
                    i += 1;
                } else {
                    out.push((Tok::Star, start));
                }
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| DslError::Parse {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(DslError::Parse {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

enum Callee {
    Unary(UnaryOp),
    Binary(BinaryOp),
    Rolling(RollingOp),
    PairRolling(PairRollingOp),
}

fn callee(name: &str) -> Option<Callee> {
    if let Some(op) = UnaryOp::ALL.into_iter().find(|op| op.name().eq_ignore_ascii_case(name)) {
        return Some(Callee::Unary(op));
    }
    if name.eq_ignore_ascii_case("log") {
        return Some(Callee::Unary(UnaryOp::SLog1p));
    }
    if let Some(op) = BinaryOp::ALL.into_iter().find(|op| op.name().eq_ignore_ascii_case(name)) {
        return Some(Callee::Binary(op));
    }
    if let Some(op) = RollingOp::ALL.into_iter().find(|op| op.name().eq_ignore_ascii_case(name)) {
        return Some(Callee::Rolling(op));
    }
    PairRollingOp::ALL
        .into_iter()
        .find(|op| op.name().eq_ignore_ascii_case(name))
        .map(Callee::PairRolling)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Parse { offset: self.offset(), message: message.into() })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn sum(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek() == Some(&Tok::Minus) {
            if let Some((Tok::Num(v), _)) = self.toks.get(self.pos + 1) {
                let v = *v;
                self.pos += 2;
                return self.power_tail(Expr::Constant(-v));
            }
            self.pos += 1;
            let x = self.unary()?;
            return Ok(Expr::unary(UnaryOp::Neg, x));
        }
        let base = self.primary()?;
        self.power_tail(base)
    }

    fn power_tail(&mut self, base: Expr) -> Result<Expr, DslError> {
        if self.peek() == Some(&Tok::Pow) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Constant(v)),
            Some(Tok::LParen) => {
                let e = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    self.call(&name, at)
                } else if let Some(f) = Feature::from_name(&name) {
                    Ok(Expr::Feature(f))
                } else {
                    Err(DslError::UnknownOperator { offset: at, name })
                }
            }
            Some(_) => {
                self.pos -= 1;
                self.error("expected an operand")
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr, DslError> {
        let callee = callee(name)
            .ok_or_else(|| DslError::UnknownOperator { offset: at, name: name.to_string() })?;
        let mut args = Vec::new();
        let mut arg_offsets = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                arg_offsets.push(self.offset());
                args.push(self.sum()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;

        let arity = |expected: usize| -> Result<(), DslError> {
            if args.len() == expected {
                Ok(())
            } else {
                Err(DslError::Arity { name: name.to_string(), expected, found: args.len() })
            }
        };
        let window = |e: &Expr, offset: usize| -> Result<usize, DslError> {
            match *e {
                Expr::Constant(c) if c >= 1.0 && c.fract() == 0.0 && c <= u32::MAX as f64 => {
                    Ok(c as usize)
                }
                _ => Err(DslError::Parse {
                    offset,
                    message: format!("{name} expects a positive integer window as its last argument"),
                }),
            }
        };

        match callee {
            Callee::Unary(op) => {
                arity(1)?;
                Ok(Expr::unary(op, args.pop().unwrap()))
            }
            Callee::Binary(op) => {
                arity(2)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::binary(op, a, b))
            }
            Callee::Rolling(op) => {
                arity(2)?;
                let w = window(&args[1], arg_offsets[1])?;
                let x = args.swap_remove(0);
                Ok(Expr::rolling(op, x, w))
            }
            Callee::PairRolling(op) => {
                arity(3)?;
                let w = window(&args[2], arg_offsets[2])?;
                args.truncate(2);
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::pair_rolling(op, a, b, w))
            }
        }
    }
}

pub fn parse_text(source: &str) -> Result<Expr, DslError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, len: source.len() };
    let e = p.sum()?;
    if p.pos < p.toks.len() {
        return p.error("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_binary_node() {
        let e = parse_text("ts_cov(close,volume,10)").unwrap();
        assert_eq!(
            e,
            Expr::pair_rolling(
                PairRollingOp::Cov,
                Expr::Feature(Feature::Close),
                Expr::Feature(Feature::Volume),
                10
            )
        );
    }

    #[test]
    fn infix_constant() {
        let e = parse_text("(close+0.01)").unwrap();
        assert_eq!(
            e,
            Expr::binary(BinaryOp::Add, Expr::Feature(Feature::Close), Expr::Constant(0.01))
        );
    }

    #[test]
    fn arity_error() {
        assert!(matches!(
            parse_text("ts_corr(high,5)"),
            Err(DslError::Arity { expected: 3, found: 2, .. })
        ));
    }

    #[test]
    fn unknown_operator_and_offsets() {
        assert!(matches!(
            parse_text("(close+foo(open))"),
            Err(DslError::UnknownOperator { offset: 7, .. })
        ));
        assert!(matches!(parse_text("(close+"), Err(DslError::Parse { offset: 7, .. })));
        assert!(matches!(parse_text("close # open"), Err(DslError::Parse { offset: 6, .. })));
    }

    #[test]
    fn double_minus_is_negative_constant() {
        let e = parse_text("(close--30.0)").unwrap();
        assert_eq!(
            e,
            Expr::binary(BinaryOp::Sub, Expr::Feature(Feature::Close), Expr::Constant(-30.0))
        );
        let e = parse_text("-close").unwrap();
        assert_eq!(e, Expr::unary(UnaryOp::Neg, Expr::Feature(Feature::Close)));
        let e = parse_text("-1*ts_mean(volume,20)").unwrap();
        assert_eq!(e.to_string(), "(-1.0*ts_mean(volume,20))");
    }

    #[test]
    fn printed_case_study_formulas_round_trip() {
        let rows = [
            "S_log1p(ts_cov(high,volume,20))",
            "S_log1p(ts_min(ts_corr(high,volume,5),10))",
            "S_log1p((-10.0-ts_corr((close+0.01),(0.5+volume),30)))",
            "(Inv((Inv(S_log1p(ts_mad((S_log1p(ts_corr(high,volume,10))*Inv((S_log1p(volume)-30.0))),20)))/30.0))+2.0)",
            "Inv((((ts_cov(vwap,(((-30.0-S_log1p((volume/-2.0)))+-10.0)*10.0),30)+5.0)/5.0)-30.0))",
            "ts_std((Inv((-2.0-ts_mad(S_log1p(volume),50)))*2.0),40)",
            "(((30.0-ts_mad(Ref(ts_delta(ts_corr(volume,vwap,10),1),10),50))--10.0)+-1.0)",
            "((((10.0-ts_min(((ts_corr(volume,(close/-0.01),40)**10.0)*-5.0),20))--10.0)*10.0)-5.0)",
        ];
        for src in rows {
            let e = parse_text(src).unwrap();
            assert_eq!(e.to_string(), src);
        }
    }

    #[test]
    fn rejects_non_integer_window() {
        assert!(parse_text("ts_mean(close,2.5)").is_err());
        assert!(parse_text("ts_mean(close,volume)").is_err());
    }
}
