//! Terminal payoff expressions.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := power (('*' | '/') power)*
//! power := unary ('^' power)?
//! unary := '-' unary | atom
//! atom  := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `W` in dimension one and `W1..Wd` otherwise (`W1` is also
//! accepted when `d = 1`). Functions: `exp`, `ln`, `abs` (one argument) and
//! `max`, `min`, `pow` (two arguments).

use std::fmt;

use crate::error::{Error, Result};

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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Abs,
    Max,
    Min,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Ln | Func::Abs => 1,
            Func::Max | Func::Min | Func::Pow => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    /// Zero-based coordinate of the terminal state.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed payoff together with the dimension it was parsed for.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffExpr {
    root: Expr,
    dim: usize,
}

impl PayoffExpr {
    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, state: &[f64]) -> Result<f64> {
        if state.len() < self.dim {
            return Err(Error::Evaluation {
                state: state.to_vec(),
                message: format!("expected a state of dimension {}", self.dim),
            });
        }
        eval(&self.root, state)
    }
}

pub fn evaluate(expr: &PayoffExpr, state: &[f64]) -> Result<f64> {
    expr.evaluate(state)
}

fn eval_err(state: &[f64], message: impl Into<String>) -> Error {
    Error::Evaluation {
        state: state.to_vec(),
        message: message.into(),
    }
}

fn eval(e: &Expr, s: &[f64]) -> Result<f64> {
    let v = match e {
        Expr::Lit(x) => *x,
        Expr::Var(i) => s[*i],
        Expr::Neg(a) => -eval(a, s)?,
        Expr::Bin(op, a, b) => {
            let x = eval(a, s)?;
            let y = eval(b, s)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(eval_err(s, "division by zero"));
                    }
                    x / y
                }
                BinOp::Pow => x.powf(y),
            }
        }
        Expr::Call(f, args) => {
            let x = eval(&args[0], s)?;
            match f {
                Func::Exp => x.exp(),
                Func::Ln => {
                    if x <= 0.0 {
                        return Err(eval_err(s, format!("ln of non-positive value {x}")));
                    }
                    x.ln()
                }
                Func::Abs => x.abs(),
                Func::Max => x.max(eval(&args[1], s)?),
                Func::Min => x.min(eval(&args[1], s)?),
                Func::Pow => x.powf(eval(&args[1], s)?),
            }
        }
    };
    if v.is_nan() {
        return Err(eval_err(s, "result is not a number"));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            let s = &text[start..i];
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(start, format!("malformed number '{s}'")))?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or(c);
                    return Err(syntax(start, format!("unexpected character '{ch}'")));
                }
            };
            out.push((start, tok));
            i += 1;
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.power()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.power()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Lit(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::lookup(&name) {
                    self.expect(Tok::LParen, &format!("'(' after {name}"))?;
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "')'")?;
                    if args.len() != f.arity() {
                        return Err(syntax(
                            at,
                            format!("{name} takes {} argument(s), got {}", f.arity(), args.len()),
                        ));
                    }
                    Ok(Expr::Call(f, args))
                } else {
                    self.variable(&name, at)
                }
            }
            t => Err(syntax(at, format!("unexpected {}", describe(&t)))),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Expr> {
        if name == "W" {
            if self.dim == 1 {
                return Ok(Expr::Var(0));
            }
            return Err(syntax(at, format!("ambiguous variable W in dimension {}, use W1..W{}", self.dim, self.dim)));
        }
        if let Some(idx) = name.strip_prefix('W').and_then(|s| s.parse::<usize>().ok()) {
            if (1..=self.dim).contains(&idx) {
                return Ok(Expr::Var(idx - 1));
            }
        }
        Err(syntax(at, format!("unknown identifier '{name}'")))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Op(c) => format!("'{c}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of input".into(),
    }
}

pub fn parse_payoff(text: &str, dim: usize) -> Result<PayoffExpr> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.offset(), format!("unexpected {}", describe(p.peek()))));
    }
    Ok(PayoffExpr { root, dim })
}

// ---------------------------------------------------------------------------
// Printing

struct Printer<'a>(&'a Expr, usize);

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dim = self.1;
        match self.0 {
            Expr::Lit(v) => write!(f, "{v:?}"),
            Expr::Var(i) if dim == 1 && *i == 0 => write!(f, "W"),
            Expr::Var(i) => write!(f, "W{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{})", Printer(a, dim)),
            Expr::Bin(op, a, b) => write!(f, "({} {} {})", Printer(a, dim), op.symbol(), Printer(b, dim)),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", Printer(a, dim))?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for PayoffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer(&self.root, self.dim).fmt(f)
    }
}
