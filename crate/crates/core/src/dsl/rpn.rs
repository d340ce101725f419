use super::expr::Expr;
use super::token::Token;
use super::DslError;

/// Post-order token sequence terminated by [`Token::End`], bounded by a
/// maximum length that counts the end marker.
#[derive(Clone, Debug, PartialEq)]
pub struct RpnProgram {
    tokens: Vec<Token>,
    max_len: usize,
}

enum Slot {
    Value(Expr),
    Window(usize),
}

impl RpnProgram {
    /// Wraps a raw sequence after checking it decodes and fits.
    pub fn new(tokens: Vec<Token>, max_len: usize) -> Result<RpnProgram, DslError> {
        let body = tokens
            .iter()
            .position(|t| matches!(t, Token::End))
            .ok_or(DslError::MissingEnd)?;
        if body + 1 > max_len {
            return Err(DslError::TooLong { len: body + 1, max: max_len });
        }
        let mut tokens = tokens;
        tokens.truncate(body + 1);
        rpn_decode(&tokens)?;
        Ok(RpnProgram { tokens, max_len })
    }

    pub fn encode(expr: &Expr, max_len: usize) -> Result<RpnProgram, DslError> {
        rpn_encode(expr, max_len)
    }

    pub fn decode(&self) -> Expr {
        rpn_decode(&self.tokens).expect("RpnProgram holds a valid sequence")
    }

    /// Tokens including the trailing end marker.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Rebuilds the syntax tree from a post-order sequence, reading up to the
/// first end marker.
pub fn rpn_decode(tokens: &[Token]) -> Result<Expr, DslError> {
    let mut stack: Vec<Slot> = Vec::with_capacity(tokens.len());

    fn pop_value(stack: &mut Vec<Slot>, position: usize, token: &Token) -> Result<Expr, DslError> {
        match stack.pop() {
            Some(Slot::Value(e)) => Ok(e),
            Some(Slot::Window(_)) => Err(DslError::Grammar {
                position,
                message: format!("{token} received a window where a value was expected"),
            }),
            None => Err(DslError::StackUnderflow { position, token: token.to_string() }),
        }
    }

    fn pop_window(stack: &mut Vec<Slot>, position: usize, token: &Token) -> Result<usize, DslError> {
        match stack.pop() {
            Some(Slot::Window(w)) => Ok(w),
            Some(Slot::Value(_)) => Err(DslError::Grammar {
                position,
                message: format!("{token} expects a window token as its last argument"),
            }),
            None => Err(DslError::StackUnderflow { position, token: token.to_string() }),
        }
    }

    // Arity is checked before popping so underflow is reported as such even
    // when a window sits on top.
    fn need(stack: &[Slot], n: usize, position: usize, token: &Token) -> Result<(), DslError> {
        if stack.len() < n {
            Err(DslError::StackUnderflow { position, token: token.to_string() })
        } else {
            Ok(())
        }
    }

    for (k, tok) in tokens.iter().enumerate() {
        match *tok {
            Token::End => {
                return match stack.len() {
                    0 => Err(DslError::StackUnderflow { position: k, token: tok.to_string() }),
                    1 => match stack.pop() {
                        Some(Slot::Value(e)) => Ok(e),
                        _ => Err(DslError::Grammar {
                            position: k,
                            message: "program ends on a window token".into(),
                        }),
                    },
                    n => Err(DslError::DanglingOperands { position: k, count: n }),
                };
            }
            Token::Feature(f) => stack.push(Slot::Value(Expr::Feature(f))),
            Token::Constant(c) => stack.push(Slot::Value(Expr::Constant(c))),
            Token::Window(w) => {
                if w == 0 {
                    return Err(DslError::InvalidWindow { window: w });
                }
                stack.push(Slot::Window(w))
            }
            Token::Unary(op) => {
                need(&stack, 1, k, tok)?;
                let x = pop_value(&mut stack, k, tok)?;
                stack.push(Slot::Value(Expr::unary(op, x)));
            }
            Token::Binary(op) => {
                need(&stack, 2, k, tok)?;
                let b = pop_value(&mut stack, k, tok)?;
                let a = pop_value(&mut stack, k, tok)?;
                stack.push(Slot::Value(Expr::binary(op, a, b)));
            }
            Token::Rolling(op) => {
                need(&stack, 2, k, tok)?;
                let w = pop_window(&mut stack, k, tok)?;
                let x = pop_value(&mut stack, k, tok)?;
                stack.push(Slot::Value(Expr::rolling(op, x, w)));
            }
            Token::PairRolling(op) => {
                need(&stack, 3, k, tok)?;
                let w = pop_window(&mut stack, k, tok)?;
                let b = pop_value(&mut stack, k, tok)?;
                let a = pop_value(&mut stack, k, tok)?;
                stack.push(Slot::Value(Expr::pair_rolling(op, a, b, w)));
            }
        }
    }
    Err(DslError::MissingEnd)
}

/// Post-order traversal plus end marker.
pub fn rpn_encode(expr: &Expr, max_len: usize) -> Result<RpnProgram, DslError> {
    let len = expr.rpn_len() + 1;
    if len > max_len {
        return Err(DslError::TooLong { len, max: max_len });
    }
    fn walk(e: &Expr, out: &mut Vec<Token>) {
        match e {
            Expr::Feature(f) => out.push(Token::Feature(*f)),
            Expr::Constant(c) => out.push(Token::Constant(*c)),
            Expr::Unary(op, x) => {
                walk(x, out);
                out.push(Token::Unary(*op));
            }
            Expr::Binary(op, a, b) => {
                walk(a, out);
                walk(b, out);
                out.push(Token::Binary(*op));
            }
            Expr::Rolling(op, x, w) => {
                walk(x, out);
                out.push(Token::Window(*w));
                out.push(Token::Rolling(*op));
            }
            Expr::PairRolling(op, a, b, w) => {
                walk(a, out);
                walk(b, out);
                out.push(Token::Window(*w));
                out.push(Token::PairRolling(*op));
            }
        }
    }
    let mut tokens = Vec::with_capacity(len);
    walk(expr, &mut tokens);
    tokens.push(Token::End);
    Ok(RpnProgram { tokens, max_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::token::*;

    #[test]
    fn decodes_cov_log_program() {
        let toks = [
            Token::Feature(Feature::High),
            Token::Feature(Feature::Volume),
            Token::Window(20),
            Token::PairRolling(PairRollingOp::Cov),
            Token::Unary(UnaryOp::SLog1p),
            Token::End,
        ];
        let e = rpn_decode(&toks).unwrap();
        assert_eq!(e.to_string(), "S_log1p(ts_cov(high,volume,20))");
    }

    #[test]
    fn single_leaf() {
        let e = rpn_decode(&[Token::Feature(Feature::Close), Token::End]).unwrap();
        assert_eq!(e, Expr::Feature(Feature::Close));
    }

    #[test]
    fn underflow_reports_position() {
        let toks = [
            Token::Feature(Feature::Close),
            Token::Feature(Feature::Open),
            Token::Binary(BinaryOp::Add),
            Token::Binary(BinaryOp::Mul),
            Token::End,
        ];
        assert!(matches!(
            rpn_decode(&toks),
            Err(DslError::StackUnderflow { position: 3, .. })
        ));
    }

    #[test]
    fn dangling_operands() {
        let toks = [Token::Feature(Feature::Close), Token::Feature(Feature::Open), Token::End];
        assert!(matches!(
            rpn_decode(&toks),
            Err(DslError::DanglingOperands { position: 2, count: 2 })
        ));
    }

    #[test]
    fn window_in_value_position() {
        let toks = [
            Token::Feature(Feature::Close),
            Token::Window(5),
            Token::Binary(BinaryOp::Add),
            Token::End,
        ];
        assert!(matches!(rpn_decode(&toks), Err(DslError::Grammar { position: 2, .. })));
        let toks = [Token::Window(5), Token::End];
        assert!(matches!(rpn_decode(&toks), Err(DslError::Grammar { .. })));
    }

    #[test]
    fn encode_corr() {
        let e = Expr::pair_rolling(
            PairRollingOp::Corr,
            Expr::Feature(Feature::Close),
            Expr::Feature(Feature::Volume),
            10,
        );
        let p = rpn_encode(&e, 20).unwrap();
        assert_eq!(
            p.tokens(),
            &[
                Token::Feature(Feature::Close),
                Token::Feature(Feature::Volume),
                Token::Window(10),
                Token::PairRolling(PairRollingOp::Corr),
                Token::End
            ]
        );
        let leaf = rpn_encode(&Expr::Feature(Feature::Volume), 2).unwrap();
        assert_eq!(leaf.tokens(), &[Token::Feature(Feature::Volume), Token::End]);
    }

    #[test]
    fn encode_too_long_at_boundary() {
        // post-order length 5 plus end marker needs 6 slots
        let e = Expr::pair_rolling(
            PairRollingOp::Corr,
            Expr::Feature(Feature::Close),
            Expr::Feature(Feature::Volume),
            10,
        );
        assert_eq!(e.rpn_len(), 4);
        let e = Expr::unary(UnaryOp::Abs, e);
        assert!(rpn_encode(&e, 6).is_ok());
        assert!(matches!(rpn_encode(&e, 5), Err(DslError::TooLong { len: 6, max: 5 })));
    }
}
