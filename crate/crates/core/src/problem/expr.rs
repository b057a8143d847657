//! A small expression language for problem data.
//!
//! Expressions are functions of the spatial coordinate `x` and time `t`
//! built from numbers, `pi`, the arithmetic operators `+ - * / ^`, the
//! functions `sin cos exp log sqrt`, and `piecewise(e1, b1, e2, b2, ..., en)`,
//! which selects `e1` for `t < b1`, `e2` for `b1 < t < b2`, ... and `en`
//! after the last breakpoint. Breakpoints must be constant.
//!
//! Expressions can be differentiated symbolically in `x`, which is how the
//! gradients and Laplacians of the control channels are obtained.

use std::fmt;

use thiserror::Error;

/// Which one-sided limit to take at a breakpoint of a piecewise-in-time
/// function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at offset {pos} in {src:?}")]
    UnexpectedChar { ch: char, pos: usize, src: String },
    #[error("unexpected end of expression {0:?}")]
    UnexpectedEnd(String),
    #[error("unexpected token {found} at offset {pos} in {src:?}")]
    UnexpectedToken { found: String, pos: usize, src: String },
    #[error("unknown function or identifier {0:?}")]
    UnknownIdent(String),
    #[error("piecewise needs an odd number (>= 3) of arguments, got {0}")]
    PiecewiseArity(usize),
    #[error("piecewise breakpoint {0} is not a constant")]
    NonConstantBreakpoint(String),
    #[error("piecewise breakpoints must be strictly increasing")]
    UnsortedBreakpoints,
    #[error("{func} expects {expected} argument(s), got {got}")]
    Arity { func: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// `pieces.len() == breaks.len() + 1`
    Piecewise { pieces: Vec<Expr>, breaks: Vec<f64> },
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { src, tokens, pos: 0 };
        let e = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(ExprError::UnexpectedToken {
                found: tok.kind.to_string(),
                pos: tok.pos,
                src: src.to_string(),
            });
        }
        Ok(e.simplify())
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    /// Evaluates at `(x, t)`; breakpoints of piecewise terms resolve to the
    /// limit from `side`.
    pub fn eval_sided(&self, x: f64, t: f64, side: Side) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::T => t,
            Expr::Neg(a) => -a.eval_sided(x, t, side),
            Expr::Add(a, b) => a.eval_sided(x, t, side) + b.eval_sided(x, t, side),
            Expr::Sub(a, b) => a.eval_sided(x, t, side) - b.eval_sided(x, t, side),
            Expr::Mul(a, b) => a.eval_sided(x, t, side) * b.eval_sided(x, t, side),
            Expr::Div(a, b) => a.eval_sided(x, t, side) / b.eval_sided(x, t, side),
            Expr::Pow(a, b) => pow(a.eval_sided(x, t, side), b.eval_sided(x, t, side)),
            Expr::Call(f, a) => f.apply(a.eval_sided(x, t, side)),
            Expr::Piecewise { pieces, breaks } => {
                let idx = match side {
                    Side::Left => breaks.iter().take_while(|&&b| t > b).count(),
                    Side::Right => breaks.iter().take_while(|&&b| t >= b).count(),
                };
                pieces[idx].eval_sided(x, t, side)
            }
        }
    }

    /// Left-limit evaluation.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.eval_sided(x, t, Side::Left)
    }

    pub fn depends_on_x(&self) -> bool {
        self.any(&|e| matches!(e, Expr::X))
    }

    pub fn depends_on_t(&self) -> bool {
        self.any(&|e| matches!(e, Expr::T | Expr::Piecewise { .. }))
    }

    /// Breakpoints of all piecewise terms, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breaks(&mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breaks(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Const(_) | Expr::X | Expr::T => {}
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_breaks(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_breaks(out);
                b.collect_breaks(out);
            }
            Expr::Piecewise { pieces, breaks } => {
                out.extend_from_slice(breaks);
                for p in pieces {
                    p.collect_breaks(out);
                }
            }
        }
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::X | Expr::T => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.any(pred),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.any(pred) || b.any(pred)
            }
            Expr::Piecewise { pieces, .. } => pieces.iter().any(|p| p.any(pred)),
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn diff_x(&self) -> Expr {
        use Expr::*;
        let d = match self {
            Const(_) | T => Const(0.0),
            X => Const(1.0),
            Neg(a) => Neg(Box::new(a.diff_x())),
            Add(a, b) => Add(Box::new(a.diff_x()), Box::new(b.diff_x())),
            Sub(a, b) => Sub(Box::new(a.diff_x()), Box::new(b.diff_x())),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.diff_x()), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.diff_x()))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.diff_x()), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.diff_x()))),
                )),
                Box::new(Mul(b.clone(), b.clone())),
            ),
            Pow(a, b) if !b.depends_on_x() => {
                // b a^(b-1) a'
                Mul(
                    Box::new(Mul(
                        b.clone(),
                        Box::new(Pow(a.clone(), Box::new(Sub(b.clone(), Box::new(Const(1.0)))))),
                    )),
                    Box::new(a.diff_x()),
                )
            }
            Pow(a, b) => {
                // a^b (b' ln a + b a'/a)
                Mul(
                    Box::new(self.clone()),
                    Box::new(Add(
                        Box::new(Mul(Box::new(b.diff_x()), Box::new(Call(Func::Log, a.clone())))),
                        Box::new(Div(Box::new(Mul(b.clone(), Box::new(a.diff_x()))), a.clone())),
                    )),
                )
            }
            Call(f, a) => {
                let inner = a.diff_x();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Box::new(Call(Func::Sin, a.clone()))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => Div(Box::new(Const(1.0)), a.clone()),
                    Func::Sqrt => Div(
                        Box::new(Const(0.5)),
                        Box::new(Call(Func::Sqrt, a.clone())),
                    ),
                };
                Mul(Box::new(outer), Box::new(inner))
            }
            Piecewise { pieces, breaks } => Piecewise {
                pieces: pieces.iter().map(Expr::diff_x).collect(),
                breaks: breaks.clone(),
            },
        };
        d.simplify()
    }

    /// Constant folding plus the algebraic identities that keep derivative
    /// trees small.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) | X | T => self.clone(),
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                s => Neg(Box::new(s)),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(0.0), s) | (s, Const(0.0)) => s,
                (s, u) => Add(Box::new(s), Box::new(u)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x - y),
                (s, Const(0.0)) => s,
                (Const(0.0), s) => Neg(Box::new(s)),
                (s, u) => Sub(Box::new(s), Box::new(u)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(0.0), _) | (_, Const(0.0)) => Const(0.0),
                (Const(1.0), s) | (s, Const(1.0)) => s,
                (s, u) => Mul(Box::new(s), Box::new(u)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(x / y),
                (Const(0.0), _) => Const(0.0),
                (s, Const(1.0)) => s,
                (s, u) => Div(Box::new(s), Box::new(u)),
            },
            Pow(a, b) => match (a.simplify(), b.simplify()) {
                (Const(x), Const(y)) => Const(pow(x, y)),
                (_, Const(0.0)) => Const(1.0),
                (s, Const(1.0)) => s,
                (s, u) => Pow(Box::new(s), Box::new(u)),
            },
            Call(f, a) => match a.simplify() {
                Const(c) => Const(f.apply(c)),
                s => Call(*f, Box::new(s)),
            },
            Piecewise { pieces, breaks } => {
                let pieces: Vec<Expr> = pieces.iter().map(Expr::simplify).collect();
                if pieces.iter().all(|p| p == &pieces[0]) {
                    pieces[0].clone()
                } else {
                    Piecewise { pieces, breaks: breaks.clone() }
                }
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() < 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::T => write!(f, "t"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Piecewise { pieces, breaks } => {
                write!(f, "piecewise(")?;
                for (i, p) in pieces.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", {}, ", breaks[i - 1])?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(v) => write!(f, "number {v}"),
            TokKind::Ident(s) => write!(f, "identifier {s:?}"),
            TokKind::Op(c) => write!(f, "operator '{c}'"),
            TokKind::LParen => write!(f, "'('"),
            TokKind::RParen => write!(f, "')'"),
            TokKind::Comma => write!(f, "','"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::UnexpectedChar {
                ch: c,
                pos: start,
                src: src.to_string(),
            })?;
            out.push(Token { kind: TokKind::Num(v), pos: start });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { kind: TokKind::Ident(src[start..i].to_string()), pos: start });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
            '(' => TokKind::LParen,
            ')' => TokKind::RParen,
            ',' => TokKind::Comma,
            _ => {
                return Err(ExprError::UnexpectedChar { ch: c, pos: i, src: src.to_string() });
            }
        };
        out.push(Token { kind, pos: i });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&TokKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn next(&mut self) -> Result<Token, ExprError> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| ExprError::UnexpectedEnd(self.src.to_string()))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ExprError> {
        let tok = self.next()?;
        if tok.kind == kind {
            Ok(())
        } else {
            Err(ExprError::UnexpectedToken {
                found: tok.kind.to_string(),
                pos: tok.pos,
                src: self.src.to_string(),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(TokKind::Op(op @ ('+' | '-'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(TokKind::Op(op @ ('*' | '/'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(TokKind::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(TokKind::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(TokKind::Op('^')) = self.peek() {
            self.pos += 1;
            // right associative; binds tighter than unary minus on the left
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect(TokKind::LParen)?;
        let mut args = vec![self.expr()?];
        while let Some(TokKind::Comma) = self.peek() {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(TokKind::RParen)?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let tok = self.next()?;
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::Const(v)),
            TokKind::LParen => {
                let e = self.expr()?;
                self.expect(TokKind::RParen)?;
                Ok(e)
            }
            TokKind::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "t" => Ok(Expr::T),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" | "log" | "sqrt" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "log" => Func::Log,
                        _ => Func::Sqrt,
                    };
                    let args = self.args()?;
                    if args.len() != 1 {
                        return Err(ExprError::Arity { func: func.name(), expected: 1, got: args.len() });
                    }
                    Ok(Expr::Call(func, Box::new(args.into_iter().next().unwrap())))
                }
                "piecewise" => {
                    let args = self.args()?;
                    if args.len() < 3 || args.len() % 2 == 0 {
                        return Err(ExprError::PiecewiseArity(args.len()));
                    }
                    let mut pieces = Vec::new();
                    let mut breaks = Vec::new();
                    for (i, a) in args.into_iter().enumerate() {
                        if i % 2 == 0 {
                            pieces.push(a);
                        } else {
                            match a.simplify() {
                                Expr::Const(b) => breaks.push(b),
                                other => return Err(ExprError::NonConstantBreakpoint(other.to_string())),
                            }
                        }
                    }
                    if breaks.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(ExprError::UnsortedBreakpoints);
                    }
                    Ok(Expr::Piecewise { pieces, breaks })
                }
                _ => Err(ExprError::UnknownIdent(name)),
            },
            other => Err(ExprError::UnexpectedToken {
                found: other.to_string(),
                pos: tok.pos,
                src: self.src.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ev(s: &str, x: f64, t: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, t)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("(1 + x) * t", 2.0, 3.0), 9.0);
        assert!((ev("pi^2 + 1", 0.0, 0.0) - (PI * PI + 1.0)).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2", 0.0, 0.0), 2e-3);
    }

    #[test]
    fn piecewise_sides() {
        let e = Expr::parse("piecewise(1, 2, 5, 3, 7)").unwrap();
        assert_eq!(e.eval_sided(0.0, 1.0, Side::Left), 1.0);
        assert_eq!(e.eval_sided(0.0, 2.0, Side::Left), 1.0);
        assert_eq!(e.eval_sided(0.0, 2.0, Side::Right), 5.0);
        assert_eq!(e.eval_sided(0.0, 2.5, Side::Right), 5.0);
        assert_eq!(e.eval_sided(0.0, 3.0, Side::Right), 7.0);
        assert_eq!(e.breakpoints(), vec![2.0, 3.0]);
    }

    #[test]
    fn derivative_of_sine_mode() {
        let e = Expr::parse("sqrt(2) * sin(pi * x)").unwrap();
        let d2 = e.diff_x().diff_x();
        for &x in &[0.1, 0.37, 0.8] {
            let want = -PI * PI * e.eval(x, 0.0);
            assert!((d2.eval(x, 0.0) - want).abs() < 1e-12);
        }
        assert!(!d2.depends_on_t());
        assert_eq!(Expr::parse("1").unwrap().diff_x(), Expr::Const(0.0));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let e = Expr::parse("x^3 * exp(-x) / (1 + x^2) + sqrt(1 + x) * cos(2*x) + log(2 + x) + x^x").unwrap();
        let d = e.diff_x();
        let h = 1e-6;
        for &x in &[0.2, 0.5, 0.9] {
            let fd = (e.eval(x + h, 0.0) - e.eval(x - h, 0.0)) / (2.0 * h);
            assert!((d.eval(x, 0.0) - fd).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(Expr::parse("foo(x)"), Err(ExprError::UnknownIdent(_))));
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd(_))));
        assert!(matches!(Expr::parse("piecewise(1, 2)"), Err(ExprError::PiecewiseArity(2))));
        assert!(matches!(Expr::parse("piecewise(1, t, 2)"), Err(ExprError::NonConstantBreakpoint(_))));
        assert!(matches!(Expr::parse("piecewise(1, 2, 2, 1, 3)"), Err(ExprError::UnsortedBreakpoints)));
        assert!(matches!(Expr::parse("1 $ 2"), Err(ExprError::UnexpectedChar { .. })));
        assert!(matches!(Expr::parse("(1 2)"), Err(ExprError::UnexpectedToken { .. })));
    }

    #[test]
    fn display_round_trips() {
        let src = "piecewise(1.5*exp(t), log(2), 3, 1, 4 - t) * sqrt(2) * sin(pi*x)";
        let e = Expr::parse(src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for &(x, t) in &[(0.3, 0.2), (0.6, 0.9), (0.1, 2.5)] {
            assert_eq!(e.eval(x, t), again.eval(x, t));
        }
    }
}
