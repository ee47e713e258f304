//! Boolean shorthand for binary mechanisms: `xor(...)`, `and(...)`, `not(a)`,
//! `const(v)`, integer literals, and references such as `U_X` or `X[t-1]`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(i64),
    Ref { name: String, lagged: bool },
    Xor(Vec<Expr>),
    And(Vec<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// References in order of first appearance.
    pub fn references(&self) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut Vec<(String, bool)>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ref { name, lagged } => {
                let r = (name.clone(), *lagged);
                if !out.contains(&r) {
                    out.push(r);
                }
            }
            Expr::Xor(xs) | Expr::And(xs) => xs.iter().for_each(|x| x.collect_refs(out)),
            Expr::Not(x) => x.collect_refs(out),
        }
    }

    /// Evaluates with `lookup` resolving references. Boolean operators require 0/1 operands.
    pub fn eval(&self, lookup: &dyn Fn(&str, bool) -> i64) -> Result<i64> {
        let bit = |v: i64| match v {
            0 | 1 => Ok(v),
            _ => Err(Error::Config(format!("boolean operator applied to {v}"))),
        };
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Ref { name, lagged } => lookup(name, *lagged),
            Expr::Xor(xs) => {
                let mut acc = 0;
                for x in xs {
                    acc ^= bit(x.eval(lookup)?)?;
                }
                acc
            }
            Expr::And(xs) => {
                let mut acc = 1;
                for x in xs {
                    acc &= bit(x.eval(lookup)?)?;
                }
                acc
            }
            Expr::Not(x) => 1 - bit(x.eval(lookup)?)?,
        })
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("expression `{}` at {}: {msg}", self.src, self.pos))
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&str> {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&self.src[start..start + len])
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        if !self.eat("(") {
            return Err(self.err("expected `(`"));
        }
        let mut out = vec![self.expr()?];
        while self.eat(",") {
            out.push(self.expr()?);
        }
        if !self.eat(")") {
            return Err(self.err("expected `)`"));
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr> {
        self.skip_ws();
        let neg = self.eat("-");
        let Some(word) = self.ident() else {
            return Err(self.err("expected an expression"));
        };
        if let Ok(v) = word.parse::<i64>() {
            return Ok(Expr::Const(if neg { -v } else { v }));
        }
        if neg {
            return Err(self.err("`-` only applies to literals"));
        }
        let word = word.to_string();
        match word.as_str() {
            "xor" => Ok(Expr::Xor(self.args()?)),
            "and" => Ok(Expr::And(self.args()?)),
            "not" => {
                let mut a = self.args()?;
                if a.len() != 1 {
                    return Err(self.err("`not` takes one argument"));
                }
                Ok(Expr::Not(Box::new(a.remove(0))))
            }
            "const" => match self.args()?.as_slice() {
                [Expr::Const(v)] => Ok(Expr::Const(*v)),
                _ => Err(self.err("`const` takes one integer")),
            },
            _ => {
                let lagged = if self.eat("[") {
                    if !(self.eat("t") && self.eat("-") && self.eat("1") && self.eat("]")) {
                        return Err(self.err("only `[t-1]` lags are supported"));
                    }
                    true
                } else {
                    false
                };
                Ok(Expr::Ref { name: word, lagged })
            }
        }
    }
}
