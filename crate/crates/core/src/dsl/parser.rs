//! Recursive descent parser for reward expressions.
//!
//! ```text
//! expr       := comparison
//! comparison := additive (("<" | "<=" | ">" | ">=" | "==") additive)*
//! additive   := term (("+" | "-") term)*
//! term       := unary (("*" | "/") unary)*
//! unary      := "-" unary | primary
//! primary    := NUMBER | IDENT | FUNC "(" expr ("," expr)* ")" | "(" expr ")"
//! FUNC       := "min" | "max" | "abs" | "exp" | "clip" | "if"
//! ```
//!
//! All binary levels are left associative.

use super::ast::{BinOp, Expr, Func, UnaryOp};
use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;

/// Nesting limit; keeps hostile inputs from exhausting the stack.
const MAX_NESTING: usize = 128;

pub fn parse(source: &str) -> Result<Expr, SyntaxError> {
    if source.trim().is_empty() {
        return Err(SyntaxError::new(0, "empty expression"));
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        nesting: 0,
    };
    let expr = parser.expr()?;
    let tok = parser.peek();
    if tok.kind != TokenKind::Eof {
        return Err(SyntaxError::new(tok.offset, "unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.cursor]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.cursor].clone();
        if tok.kind != TokenKind::Eof {
            self.cursor += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token, SyntaxError> {
        let tok = self.advance();
        if tok.kind == kind {
            Ok(tok)
        } else {
            Err(SyntaxError::new(tok.offset, format!("expected {what}")))
        }
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(SyntaxError::new(self.peek().offset, "expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.enter()?;
        let result = self.comparison();
        self.nesting -= 1;
        result
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Lt => BinOp::Lt,
                TokenKind::Le => BinOp::Le,
                TokenKind::Gt => BinOp::Gt,
                TokenKind::Ge => BinOp::Ge,
                TokenKind::EqEq => BinOp::Eq,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.additive()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek().kind == TokenKind::Minus {
            self.advance();
            self.enter()?;
            let child = self.unary();
            self.nesting -= 1;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(child?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let tok = self.advance();
        match tok.kind {
            TokenKind::Number(value) => Ok(Expr::Constant(value)),
            TokenKind::Ident(name) => {
                let is_call = self.peek().kind == TokenKind::LParen;
                match (Func::from_name(&name), is_call) {
                    (Some(func), true) => self.call(func, tok.offset),
                    (Some(func), false) => Err(SyntaxError::new(
                        tok.offset,
                        format!("'{}' is a function and needs {} argument(s)", func.name(), func.arity()),
                    )),
                    (None, true) => Err(SyntaxError::new(tok.offset, format!("unknown function '{name}'"))),
                    (None, false) => Ok(Expr::Variable(name)),
                }
            }
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(inner)
            }
            TokenKind::Eof => Err(SyntaxError::new(tok.offset, "unexpected end of input")),
            _ => Err(SyntaxError::new(tok.offset, "expected a number, variable, function call or '('")),
        }
    }

    fn call(&mut self, func: Func, offset: usize) -> Result<Expr, SyntaxError> {
        self.expect(TokenKind::LParen, "'('")?;
        let mut args = Vec::new();
        if self.peek().kind != TokenKind::RParen {
            loop {
                args.push(self.expr()?);
                if self.peek().kind == TokenKind::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen, "',' or ')'")?;
        if args.len() != func.arity() {
            return Err(SyntaxError::new(
                offset,
                format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
            ));
        }
        Ok(Expr::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Expr {
        Expr::Constant(v)
    }

    #[test]
    fn unary_binds_tighter_than_product() {
        assert_eq!(
            parse("-0.1 * energy_step").unwrap(),
            Expr::binary(BinOp::Mul, Expr::neg(c(0.1)), Expr::var("energy_step"))
        );
    }

    #[test]
    fn conditional_call() {
        assert_eq!(
            parse("if(collision_now > 0, -10, 0)").unwrap(),
            Expr::Call(
                Func::If,
                vec![
                    Expr::binary(BinOp::Gt, Expr::var("collision_now"), c(0.0)),
                    Expr::neg(c(10.0)),
                    c(0.0)
                ]
            )
        );
    }

    #[test]
    fn clip_arity_is_checked() {
        let err = parse("clip(x, 0)").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("clip takes 3"), "{}", err.message);
    }

    #[test]
    fn arity_of_every_builtin() {
        assert!(parse("abs(1, 2)").is_err());
        assert!(parse("exp()").is_err());
        assert!(parse("min(1)").is_err());
        assert!(parse("max(1, 2, 3)").is_err());
        assert!(parse("if(1, 2)").is_err());
        assert!(parse("min(1, 2)").is_ok());
    }

    #[test]
    fn left_associative_levels() {
        assert_eq!(
            parse("a - b - c").unwrap(),
            Expr::binary(
                BinOp::Sub,
                Expr::binary(BinOp::Sub, Expr::var("a"), Expr::var("b")),
                Expr::var("c")
            )
        );
        assert_eq!(
            parse("a / b * c").unwrap(),
            Expr::binary(
                BinOp::Mul,
                Expr::binary(BinOp::Div, Expr::var("a"), Expr::var("b")),
                Expr::var("c")
            )
        );
    }

    #[test]
    fn comparisons_bind_loosest() {
        assert_eq!(
            parse("a + 1 < b * 2").unwrap(),
            Expr::binary(
                BinOp::Lt,
                Expr::binary(BinOp::Add, Expr::var("a"), c(1.0)),
                Expr::binary(BinOp::Mul, Expr::var("b"), c(2.0))
            )
        );
    }

    #[test]
    fn parentheses_override() {
        assert_eq!(
            parse("(a + b) * c").unwrap(),
            Expr::binary(
                BinOp::Mul,
                Expr::binary(BinOp::Add, Expr::var("a"), Expr::var("b")),
                Expr::var("c")
            )
        );
    }

    #[test]
    fn error_offsets() {
        assert_eq!(parse("").unwrap_err().offset, 0);
        assert_eq!(parse("a +").unwrap_err().offset, 3);
        assert_eq!(parse("(a").unwrap_err().offset, 2);
        assert_eq!(parse("a b").unwrap_err().offset, 2);
        assert_eq!(parse("foo(1)").unwrap_err().offset, 0);
        assert_eq!(parse("1 + min").unwrap_err().offset, 4);
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let src = format!("{}x{}", "(".repeat(500), ")".repeat(500));
        assert!(parse(&src).unwrap_err().message.contains("nested"));
        let negs = format!("{}x", "-".repeat(500));
        assert!(parse(&negs).is_err());
    }
}
