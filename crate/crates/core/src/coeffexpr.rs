//! A small arithmetic language for spatially varying coefficients.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'x' | 'y' | 'pi' | 'e'
//!          | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `-x^2` therefore parses as `-(x^2)`. Functions: `exp sin cos sqrt abs
//! tanh` (one argument) and `min max` (two arguments).

use std::fmt;

use thiserror::Error;

use crate::grid::TruncatedGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedConst {
    Pi,
    E,
}

impl NamedConst {
    fn value(self) -> f64 {
        match self {
            NamedConst::Pi => std::f64::consts::PI,
            NamedConst::E => std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(NamedConst),
    Var(Var),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: &'static str,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("square root of a negative value in `{0}`")]
    NegativeSqrt(String),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("|a({x}, {y})| = {value} exceeds the declared bound {bound}")]
    BoundViolated { x: f64, y: f64, value: f64, bound: f64 },
    #[error("declared bound must be finite and non-negative, got {0}")]
    InvalidBound(f64),
    #[error("region of radius {radius} contains no lattice node")]
    EmptyRegion { radius: f64 },
    #[error("radius {radius} is outside [0, R = {grid_radius}]")]
    RadiusOutOfRange { radius: f64, grid_radius: f64 },
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let tokens = lex(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        parser.expect_end()?;
        Ok(expr)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Const(c) => c.value(),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(inner) => -inner.eval(x, y)?,
            Expr::Binary { op, lhs, rhs } => {
                let a = lhs.eval(x, y)?;
                let b = rhs.eval(x, y)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero(self.to_string()));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call { func, args } => {
                let a = args[0].eval(x, y)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::NegativeSqrt(self.to_string()));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                    Func::Min => a.min(args[1].eval(x, y)?),
                    Func::Max => a.max(args[1].eval(x, y)?),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite(self.to_string()))
        }
    }

    pub fn uses_var(&self, var: Var) -> bool {
        match self {
            Expr::Var(v) => *v == var,
            Expr::Num(_) | Expr::Const(_) => false,
            Expr::Neg(inner) => inner.uses_var(var),
            Expr::Binary { lhs, rhs, .. } => lhs.uses_var(var) || rhs.uses_var(var),
            Expr::Call { args, .. } => args.iter().any(|a| a.uses_var(var)),
        }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) | Expr::Call { .. } => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary { op, .. } => op.precedence(),
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Const(NamedConst::Pi) => f.write_str("pi"),
            Expr::Const(NamedConst::E) => f.write_str("e"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                inner.fmt_child(f, PREC_NEG)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                if *op == BinOp::Pow {
                    lhs.fmt_child(f, PREC_ATOM)?;
                    f.write_str("^")?;
                    rhs.fmt_child(f, PREC_NEG)
                } else {
                    lhs.fmt_child(f, p)?;
                    write!(f, " {} ", op.symbol())?;
                    rhs.fmt_child(f, p + 1)
                }
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        let start = pos;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                pos += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push((tok, start));
            pos += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
                pos += 1;
            }
            if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                let mut look = pos + 1;
                if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                    look += 1;
                }
                if look < bytes.len() && bytes[look].is_ascii_digit() {
                    pos = look;
                    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                        pos += 1;
                    }
                }
            }
            let text = &source[start..pos];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push((Tok::Num(v), start)),
                _ => {
                    return Err(ParseError::Syntax {
                        offset: start,
                        expected: vec!["finite number"],
                        found: format!("`{text}`"),
                    })
                }
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            out.push((Tok::Ident(source[start..pos].to_string()), start));
        } else {
            let ch = source[start..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: start,
                expected: vec!["operator", "number", "identifier", "`(`"],
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((Tok::End, source.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected,
            found: self.peek().describe(),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.error(vec!["operator", "end of input"]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            Ok(Expr::binary(BinOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error(vec!["`)`", "operator"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    "pi" => return Ok(Expr::Const(NamedConst::Pi)),
                    "e" => return Ok(Expr::Const(NamedConst::E)),
                    _ => {}
                }
                let func =
                    Func::from_name(&name).ok_or(ParseError::UnknownIdentifier { name, offset })?;
                if *self.peek() != Tok::LParen {
                    return Err(self.error(vec!["`(`"]));
                }
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                if *self.peek() != Tok::RParen {
                    return Err(self.error(vec!["`,`", "`)`", "operator"]));
                }
                self.bump();
                if args.len() != func.arity() {
                    return Err(ParseError::Arity {
                        name: func.name(),
                        offset,
                        expected: func.arity(),
                        found: args.len(),
                    });
                }
                Ok(Expr::Call { func, args })
            }
            _ => Err(self.error(vec!["number", "identifier", "`(`", "`-`"])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Nodes with `x^2 + y^2 < r^2`.
    Inner,
    /// Nodes with `x^2 + y^2 >= r^2`.
    Outer,
}

/// A coefficient `a(x, y)` together with the global bound the user asserts
/// for it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    expr: Expr,
    declared_bound: f64,
}

impl CoefficientField {
    pub fn new(expr: Expr, declared_bound: f64) -> Result<Self, FieldError> {
        if !(declared_bound.is_finite() && declared_bound >= 0.0) {
            return Err(FieldError::InvalidBound(declared_bound));
        }
        Ok(Self {
            expr,
            declared_bound,
        })
    }

    pub fn parse(source: &str, declared_bound: f64) -> Result<Self, ParseError> {
        let expr = Expr::parse(source)?;
        Ok(Self {
            expr,
            declared_bound: if declared_bound.is_finite() {
                declared_bound.abs()
            } else {
                f64::MAX
            },
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            expr: Expr::Num(value),
            declared_bound: value.abs(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn declared_bound(&self) -> f64 {
        self.declared_bound
    }

    /// Value at `(x, y)`, checked against the declared bound.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, FieldError> {
        let value = self.expr.eval(x, y)?;
        if value.abs() > self.declared_bound * (1.0 + 1e-12) {
            return Err(FieldError::BoundViolated {
                x,
                y,
                value,
                bound: self.declared_bound,
            });
        }
        Ok(value)
    }

    /// `self + delta`, with the bound widened accordingly.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            expr: Expr::binary(BinOp::Add, self.expr.clone(), Expr::Num(delta)),
            declared_bound: self.declared_bound + delta.abs(),
        }
    }

    /// Pointwise sum of two fields.
    pub fn plus(&self, other: &CoefficientField) -> Self {
        Self {
            expr: Expr::binary(BinOp::Add, self.expr.clone(), other.expr.clone()),
            declared_bound: self.declared_bound + other.declared_bound,
        }
    }

    /// Evaluates at every node of the grid's bounding box and fails on the
    /// first bound violation.
    pub fn check_bound(&self, grid: &TruncatedGrid) -> Result<(), FieldError> {
        for (_, _, x, y) in grid.box_nodes() {
            self.eval(x, y)?;
        }
        Ok(())
    }

    /// Maximum of the field over the lattice nodes of the grid's bounding box
    /// lying inside (resp. outside) the half-disk of the given radius.
    ///
    /// This is a grid-sampled approximation of the true supremum; the outer
    /// region only sees the part of the complement inside `[-R, R] x [0, R]`.
    pub fn sup_on_region(
        &self,
        grid: &TruncatedGrid,
        region: Region,
        radius: f64,
    ) -> Result<f64, FieldError> {
        if !(0.0..=grid.radius() * (1.0 + 1e-12)).contains(&radius) {
            return Err(FieldError::RadiusOutOfRange {
                radius,
                grid_radius: grid.radius(),
            });
        }
        let r2 = radius * radius;
        let mut best: Option<f64> = None;
        for (_, _, x, y) in grid.box_nodes() {
            let d2 = x * x + y * y;
            let selected = match region {
                Region::Inner => d2 < r2,
                Region::Outer => d2 >= r2,
            };
            if selected {
                let v = self.expr.eval(x, y)?;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best.ok_or(FieldError::EmptyRegion { radius })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;
    use proptest::prelude::*;

    fn eval(src: &str, x: f64, y: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, y).unwrap()
    }

    #[test]
    fn literal() {
        assert_eq!(Expr::parse("0.5").unwrap(), Expr::Num(0.5));
    }

    #[test]
    fn precedence_of_niche_profile() {
        let e = Expr::parse("1 - 0.1*(x^2 + y^2)").unwrap();
        match e {
            Expr::Binary { op, rhs, .. } => {
                assert_eq!(op, BinOp::Sub);
                assert!(matches!(*rhs, Expr::Binary { op: BinOp::Mul, .. }));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn examples() {
        assert_eq!(eval("exp(-(x-2)^2)", 2.0, 0.0), 1.0);
        assert_eq!(eval("x*y", 3.0, 4.0), 12.0);
        assert_eq!(eval("min(1, x)", 5.0, 0.0), 1.0);
        assert_eq!(eval("1 - 0.1*(x^2+y^2)", 0.0, 0.0), 1.0);
    }

    #[test]
    fn associativity() {
        assert_eq!(eval("8 - 4 - 2", 0.0, 0.0), 2.0);
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(eval("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(eval("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(eval("max(pi, e) + tanh(0) + abs(-1)", 0.0, 0.0), std::f64::consts::PI + 1.0);
    }

    #[test]
    fn syntax_errors_report_offset() {
        let err = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(err.offset(), 4);
        assert!(matches!(err, ParseError::Syntax { .. }));
        let err = Expr::parse("(x + 1").unwrap_err();
        assert_eq!(err.offset(), 6);
        let err = Expr::parse("1 2").unwrap_err();
        assert_eq!(err.offset(), 2);
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("x $ y").is_err());
    }

    #[test]
    fn unknown_identifier_and_arity() {
        assert_eq!(
            Expr::parse("2 * z").unwrap_err(),
            ParseError::UnknownIdentifier {
                name: "z".into(),
                offset: 4
            }
        );
        assert!(matches!(
            Expr::parse("min(x)").unwrap_err(),
            ParseError::Arity { expected: 2, found: 1, .. }
        ));
        assert!(matches!(
            Expr::parse("sin(x, y)").unwrap_err(),
            ParseError::Arity { .. }
        ));
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expr::parse("1 + sqrt(x - 3)").unwrap();
        assert_eq!(
            e.eval(0.0, 0.0).unwrap_err(),
            EvalError::NegativeSqrt("sqrt(x - 3)".into())
        );
        let e = Expr::parse("1 / (x - y)").unwrap();
        assert!(matches!(e.eval(1.0, 1.0), Err(EvalError::DivisionByZero(_))));
        let e = Expr::parse("exp(1000 * x)").unwrap();
        assert!(matches!(e.eval(1.0, 0.0), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn sup_examples() {
        let grid = TruncatedGrid::new(1.0, 0.5, Shape::Halfdisk).unwrap();
        let c = CoefficientField::constant(0.5);
        assert_eq!(c.sup_on_region(&grid, Region::Inner, 1.0).unwrap(), 0.5);
        assert_eq!(c.sup_on_region(&grid, Region::Outer, 1.0).unwrap(), 0.5);

        let niche = CoefficientField::parse("1 - 0.1*(x^2 + y^2)", 100.0).unwrap();
        assert_eq!(niche.sup_on_region(&grid, Region::Inner, 1.0).unwrap(), 1.0);

        let big = TruncatedGrid::new(10.0, 0.5, Shape::Halfdisk).unwrap();
        let outer = niche.sup_on_region(&big, Region::Outer, 5.0).unwrap();
        // brute force over the lattice
        let mut best = f64::NEG_INFINITY;
        for i in -20..=20 {
            for j in 0..=20 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                if x * x + y * y >= 25.0 {
                    best = best.max(1.0 - 0.1 * (x * x + y * y));
                }
            }
        }
        assert_eq!(outer, best);
        assert!(outer <= -1.5 + 1e-12);
    }

    #[test]
    fn sup_region_errors() {
        let grid = TruncatedGrid::new(1.0, 0.5, Shape::Halfdisk).unwrap();
        let c = CoefficientField::constant(1.0);
        assert!(matches!(
            c.sup_on_region(&grid, Region::Inner, 0.0),
            Err(FieldError::EmptyRegion { .. })
        ));
        assert!(matches!(
            c.sup_on_region(&grid, Region::Outer, 2.0),
            Err(FieldError::RadiusOutOfRange { .. })
        ));
    }

    #[test]
    fn bound_violation_is_reported() {
        let grid = TruncatedGrid::new(2.0, 0.5, Shape::Halfdisk).unwrap();
        let field = CoefficientField::parse("x", 1.0).unwrap();
        assert!(matches!(
            field.check_bound(&grid),
            Err(FieldError::BoundViolated { .. })
        ));
        let field = CoefficientField::parse("tanh(x)", 1.0).unwrap();
        field.check_bound(&grid).unwrap();
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            Just(Expr::Var(Var::X)),
            Just(Expr::Var(Var::Y)),
            Just(Expr::Const(NamedConst::Pi)),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                (
                    prop_oneof![Just(Func::Exp), Just(Func::Sqrt), Just(Func::Tanh)],
                    inner.clone()
                )
                    .prop_map(|(func, a)| Expr::Call { func, args: vec![a] }),
                (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                    .prop_map(|(func, a, b)| Expr::Call { func, args: vec![a, b] }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = Expr::parse(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn evaluation_is_deterministic(e in arb_expr(), x in -5.0f64..5.0, y in 0.0f64..5.0) {
            let a = e.eval(x, y);
            let b = e.eval(x, y);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn outer_sup_shrinks_with_radius(r1 in 0.0f64..4.0, dr in 0.0f64..2.0) {
            let grid = TruncatedGrid::new(6.0, 0.5, Shape::Halfdisk).unwrap();
            let f = CoefficientField::parse("sin(x) * cos(0.7*y) - 0.05*x", 10.0).unwrap();
            let s1 = f.sup_on_region(&grid, Region::Outer, r1).unwrap();
            let s2 = f.sup_on_region(&grid, Region::Outer, r1 + dr).unwrap();
            prop_assert!(s1 >= s2);
        }
    }
}
