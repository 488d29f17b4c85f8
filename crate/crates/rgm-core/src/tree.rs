//! A small expression language describing recursive trees and paths.
//!
//! A tree maps a position `s` to its branching factor, with `len` bound to
//! the length of `s` and `last` to its last entry (0 at the root). A path
//! maps `n` to the branch taken at level `n`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree expression error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("path leaves the tree at level {level}: branch {branch} but only {width} children")]
    OffTree { level: usize, branch: u64, width: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Expr {
    Num(u64),
    Var(Var),
    Bin(Op, Box<Expr>, Box<Expr>),
    Cmp(Cmp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    Len,
    Last,
    N,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Clone, Copy, Default)]
struct Env {
    len: u64,
    last: u64,
    n: u64,
}

impl Expr {
    fn eval(&self, env: Env) -> u64 {
        match self {
            Expr::Num(k) => *k,
            Expr::Var(Var::Len) => env.len,
            Expr::Var(Var::Last) => env.last,
            Expr::Var(Var::N) => env.n,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    Op::Add => a.saturating_add(b),
                    Op::Sub => a.saturating_sub(b),
                    Op::Mul => a.saturating_mul(b),
                    Op::Min => a.min(b),
                    Op::Max => a.max(b),
                }
            }
            Expr::Cmp(..) => self.holds(env) as u64,
            Expr::If(c, t, e) => {
                if c.holds(env) {
                    t.eval(env)
                } else {
                    e.eval(env)
                }
            }
        }
    }

    fn holds(&self, env: Env) -> bool {
        match self {
            Expr::Cmp(c, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match c {
                    Cmp::Lt => a < b,
                    Cmp::Le => a <= b,
                    Cmp::Gt => a > b,
                    Cmp::Ge => a >= b,
                    Cmp::Eq => a == b,
                    Cmp::Ne => a != b,
                }
            }
            other => other.eval(env) != 0,
        }
    }
}

/// A recursive tree given by its branching function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecTree {
    source: String,
    expr: Expr,
}

impl RecTree {
    /// Parses a tree expression; `unary` and `binary` name the constant trees.
    pub fn parse(text: &str) -> Result<RecTree, TreeError> {
        let source = text.trim().to_string();
        let expr = match source.as_str() {
            "unary" => Expr::Num(1),
            "binary" => Expr::Num(2),
            _ => parse_expr(&source, &[("len", Var::Len), ("last", Var::Last)])?,
        };
        Ok(RecTree { source, expr })
    }

    pub fn constant(k: u64) -> RecTree {
        RecTree { source: k.to_string(), expr: Expr::Num(k) }
    }

    /// Number of children of the node at `pos`.
    pub fn branching(&self, pos: &[u64]) -> u64 {
        let env = Env { len: pos.len() as u64, last: pos.last().copied().unwrap_or(0), n: 0 };
        self.expr.eval(env)
    }

    /// Whether `pos` is a node: each step stays below its parent's branching.
    pub fn contains(&self, pos: &[u64]) -> bool {
        (0..pos.len()).all(|i| pos[i] < self.branching(&pos[..i]))
    }

    /// All nodes of length below `depth`, in lexicographic order.
    pub fn positions(&self, depth: usize) -> Vec<Vec<u64>> {
        let mut out = Vec::new();
        let mut stack = vec![Vec::new()];
        while let Some(pos) = stack.pop() {
            if pos.len() < depth {
                let width = self.branching(&pos);
                for i in (0..width).rev() {
                    let mut child = pos.clone();
                    child.push(i);
                    stack.push(child);
                }
            }
            out.push(pos);
        }
        out.retain(|p| p.len() < depth);
        out
    }
}

impl fmt::Display for RecTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// An infinite path `n -> f(n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSpec {
    source: String,
    expr: Expr,
}

impl PathSpec {
    pub fn parse(text: &str) -> Result<PathSpec, TreeError> {
        let source = text.trim().to_string();
        let expr = parse_expr(&source, &[("n", Var::N)])?;
        Ok(PathSpec { source, expr })
    }

    pub fn constant(k: u64) -> PathSpec {
        PathSpec { source: k.to_string(), expr: Expr::Num(k) }
    }

    pub fn at(&self, n: usize) -> u64 {
        self.expr.eval(Env { n: n as u64, ..Env::default() })
    }

    /// The first `len` branches, checked against `tree`.
    pub fn prefix_in(&self, tree: &RecTree, len: usize) -> Result<Vec<u64>, TreeError> {
        let mut pos = Vec::with_capacity(len);
        for level in 0..len {
            let branch = self.at(level);
            let width = tree.branching(&pos);
            if branch >= width {
                return Err(TreeError::OffTree { level, branch, width });
            }
            pos.push(branch);
        }
        Ok(pos)
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn parse_expr(text: &str, vars: &[(&str, Var)]) -> Result<Expr, TreeError> {
    let mut p = ExprParser { src: text, pos: 0, vars };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct ExprParser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [(&'a str, Var)],
}

impl ExprParser<'_> {
    fn error(&self, msg: &str) -> TreeError {
        TreeError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        let rest = self.src[self.pos..].trim_start();
        self.pos = self.src.len() - rest.len();
    }

    fn peek_word(&mut self) -> &str {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
        &rest[..end]
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.peek_word() == kw {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), TreeError> {
        if self.keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{kw}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, TreeError> {
        if self.keyword("if") {
            let c = self.expr()?;
            self.expect_keyword("then")?;
            let t = self.expr()?;
            self.expect_keyword("else")?;
            let e = self.expr()?;
            return Ok(Expr::If(Box::new(c), Box::new(t), Box::new(e)));
        }
        let lhs = self.sum()?;
        let ops = [
            ("<=", Cmp::Le),
            (">=", Cmp::Ge),
            ("==", Cmp::Eq),
            ("!=", Cmp::Ne),
            ("<", Cmp::Lt),
            (">", Cmp::Gt),
            ("=", Cmp::Eq),
        ];
        for (tok, cmp) in ops {
            if self.eat(tok) {
                let rhs = self.sum()?;
                return Ok(Expr::Cmp(cmp, Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Expr, TreeError> {
        let mut acc = self.product()?;
        loop {
            let op = if self.eat("+") {
                Op::Add
            } else if self.eat("-") {
                Op::Sub
            } else {
                return Ok(acc);
            };
            let rhs = self.product()?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, TreeError> {
        let mut acc = self.atom()?;
        while self.eat("*") {
            let rhs = self.atom()?;
            acc = Expr::Bin(Op::Mul, Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<Expr, TreeError> {
        if self.eat("(") {
            let e = self.expr()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        let word = self.peek_word().to_string();
        if word.is_empty() {
            return Err(self.error("expected an expression"));
        }
        if word.chars().all(|c| c.is_ascii_digit()) {
            let k = word.parse().map_err(|_| self.error("number too large"))?;
            self.pos += word.len();
            return Ok(Expr::Num(k));
        }
        if word == "if" {
            return self.expr();
        }
        if word == "min" || word == "max" {
            self.pos += word.len();
            if !self.eat("(") {
                return Err(self.error("expected `(`"));
            }
            let a = self.expr()?;
            if !self.eat(",") {
                return Err(self.error("expected `,`"));
            }
            let b = self.expr()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            let op = if word == "min" { Op::Min } else { Op::Max };
            return Ok(Expr::Bin(op, Box::new(a), Box::new(b)));
        }
        match self.vars.iter().find(|(name, _)| *name == word) {
            Some((_, v)) => {
                self.pos += word.len();
                Ok(Expr::Var(*v))
            }
            None => Err(self.error(&format!("unknown name `{word}`"))),
        }
    }
}
