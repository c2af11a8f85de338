//! Arithmetic expressions in one variable `t`.
//!
//! Grammar, loosest binding first: `+ -` (left), `* /` (left), unary `-`,
//! `^` (right). `-t^2` is `-(t^2)` and `2^-1` is `2^(-1)`. Identifiers are
//! `t`, `pi`, `e` and the functions `exp log sin cos sqrt abs min max`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Op {
    fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
            Op::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
        Func::Abs,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
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

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Source position, 1-based. Ignored by equality so that trees compare by
/// structure only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>, Pos),
    Call(Func, Vec<Expr>, Pos),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{msg} at {pos}")]
pub struct ParseError {
    pub pos: Pos,
    pub msg: String,
}

/// A point where evaluation leaves the real domain or overflows.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{what} at t = {t} ({pos})")]
pub struct DomainError {
    pub t: f64,
    pub pos: Pos,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, Pos)>,
}

impl Lexer {
    fn new(src: &str) -> Result<Lexer, ParseError> {
        let chars: Vec<char> = src.chars().collect();
        let mut toks = Vec::new();
        let (mut i, mut line, mut col) = (0, 1, 1);
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line, col };
            if c == '\n' {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            if c.is_whitespace() {
                i += 1;
                col += 1;
                continue;
            }
            let start = i;
            if c.is_ascii_digit() || c == '.' {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| ParseError {
                    pos,
                    msg: format!("malformed number '{text}'"),
                })?;
                toks.push((Tok::Num(v), pos));
            } else if c.is_alphabetic() || c == '_' {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            } else {
                let sym = match c {
                    '\u{2212}' => '-',
                    '\u{00d7}' => '*',
                    '\u{00f7}' => '/',
                    '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => c,
                    _ => {
                        return Err(ParseError {
                            pos,
                            msg: format!("unexpected character '{c}'"),
                        })
                    }
                };
                i += 1;
                toks.push((Tok::Sym(sym), pos));
            }
            col += i - start;
        }
        toks.push((Tok::End, Pos { line, col }));
        Ok(Lexer { toks })
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected '{c}', found {}", describe(self.peek())))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => Op::Add,
                Tok::Sym('-') => Op::Sub,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs), pos);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => Op::Mul,
                Tok::Sym('/') => Op::Div,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs), pos);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Sym('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Sym('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            let (_, pos) = self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp), pos));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "t" => Ok(Expr::Var),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "e" => Ok(Expr::Const(std::f64::consts::E)),
                _ => {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ParseError {
                            pos,
                            msg: format!("unknown identifier '{name}'"),
                        });
                    };
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Sym(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != f.arity() {
                        return Err(ParseError {
                            pos,
                            msg: format!("{} takes {} argument(s), got {}", f.name(), f.arity(), args.len()),
                        });
                    }
                    Ok(Expr::Call(f, args, pos))
                }
            },
            other => Err(ParseError {
                pos,
                msg: format!("expected a number, 't', a function or '(', found {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::End => "end of input".into(),
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let lex = Lexer::new(src)?;
    let mut p = Parser { toks: lex.toks, at: 0 };
    if *p.peek() == Tok::End {
        return p.err("empty expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}

fn apply(op: Op, a: f64, b: f64) -> f64 {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
        Op::Pow => a.powf(b),
    }
}

fn call(f: Func, x: f64, y: f64) -> f64 {
    match f {
        Func::Exp => x.exp(),
        Func::Log => x.ln(),
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Sqrt => x.sqrt(),
        Func::Abs => x.abs(),
        Func::Min => x.min(y),
        Func::Max => x.max(y),
    }
}

impl Expr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => t,
            Expr::Neg(a) => -a.eval(t),
            Expr::Bin(op, a, b, _) => apply(*op, a.eval(t), b.eval(t)),
            Expr::Call(f, args, _) => {
                let x = args[0].eval(t);
                let y = args.get(1).map_or(0.0, |a| a.eval(t));
                call(*f, x, y)
            }
        }
    }

    /// Evaluates with domain checks; reports the innermost offending node.
    pub fn eval_checked(&self, t: f64) -> Result<f64, DomainError> {
        let fail = |pos: Pos, what: String| DomainError { t, pos, what };
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var => t,
            Expr::Neg(a) => -a.eval_checked(t)?,
            Expr::Bin(op, a, b, pos) => {
                let (x, y) = (a.eval_checked(t)?, b.eval_checked(t)?);
                match op {
                    Op::Div if y == 0.0 => return Err(fail(*pos, "division by zero".into())),
                    Op::Pow if x < 0.0 && y.fract() != 0.0 => {
                        return Err(fail(*pos, format!("negative base {x} with non-integer exponent {y}")))
                    }
                    Op::Pow if x == 0.0 && y < 0.0 => {
                        return Err(fail(*pos, "zero raised to a negative power".into()))
                    }
                    _ => {}
                }
                let v = apply(*op, x, y);
                if !v.is_finite() {
                    return Err(fail(*pos, format!("'{}' overflows", op.symbol())));
                }
                v
            }
            Expr::Call(f, args, pos) => {
                let x = args[0].eval_checked(t)?;
                let y = match args.get(1) {
                    Some(a) => a.eval_checked(t)?,
                    None => 0.0,
                };
                match f {
                    Func::Log if x <= 0.0 => return Err(fail(*pos, format!("log of non-positive value {x}"))),
                    Func::Sqrt if x < 0.0 => return Err(fail(*pos, format!("sqrt of negative value {x}"))),
                    _ => {}
                }
                let v = call(*f, x, y);
                if !v.is_finite() {
                    return Err(fail(*pos, format!("{} overflows", f.name())));
                }
                v
            }
        };
        Ok(v)
    }

    /// Checks the domain at `samples` evenly spaced points of `[a, b]`.
    pub fn check_domain(&self, a: f64, b: f64, samples: usize) -> Result<(), DomainError> {
        let n = samples.max(2);
        for k in 0..n {
            let t = if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 };
            self.eval_checked(t)?;
        }
        Ok(())
    }

    /// Positions of partial operations (`log`, `sqrt`, division, powers)
    /// whose domain depends on the data.
    pub fn domain_risks(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_risks(&mut out);
        out
    }

    fn collect_risks(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) | Expr::Var => {}
            Expr::Neg(a) => a.collect_risks(out),
            Expr::Bin(op, a, b, pos) => {
                let risky = match op {
                    Op::Div => b.constant_value().is_none_or(|v| v == 0.0),
                    Op::Pow => !(a.is_constant() && b.is_constant()),
                    _ => false,
                };
                if risky {
                    out.push(format!("'{}' at {pos}", op.symbol()));
                }
                a.collect_risks(out);
                b.collect_risks(out);
            }
            Expr::Call(f, args, pos) => {
                if matches!(f, Func::Log | Func::Sqrt) && !args[0].is_constant() {
                    out.push(format!("{} at {pos}", f.name()));
                }
                args.iter().for_each(|a| a.collect_risks(out));
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var => false,
            Expr::Neg(a) => a.is_constant(),
            Expr::Bin(_, a, b, _) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args, _) => args.iter().all(Expr::is_constant),
        }
    }

    /// Folds every constant subtree into a single constant.
    pub fn fold(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var => self.clone(),
            _ if self.is_constant() => Expr::Const(self.eval(0.0)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.fold())),
            Expr::Bin(op, a, b, pos) => Expr::Bin(*op, Box::new(a.fold()), Box::new(b.fold()), *pos),
            Expr::Call(f, args, pos) => Expr::Call(*f, args.iter().map(Expr::fold).collect(), *pos),
        }
    }

    /// Value when the expression does not depend on `t`.
    pub fn constant_value(&self) -> Option<f64> {
        self.is_constant().then(|| self.eval(0.0))
    }
}

/// Fully parenthesized, so that parsing the output gives back the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => write!(f, "(-{:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var => write!(f, "t"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b, _) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args, _) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
