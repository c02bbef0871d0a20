//! Syntactic linear expressions and comparisons, as written in source text.
//!
//! Both the path-condition grammar and the toy program language use
//! `term (("+"|"-") term)*` with `term := int | ident | int "*" ident`,
//! extended with parenthesized groups `(expr)`, `-(expr)` and `int*(expr)`.
//! The syntax tree keeps the written shape so that program mutants can flip a
//! single operator or constant.

use std::fmt;

use num_bigint::BigInt;

use crate::lex::{Cursor, Tok};
use crate::pc::{LinExpr, Op};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(BigInt),
    Var(String),
    Scaled(BigInt, String),
    /// `k * (expr)`.
    Group(BigInt, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AddOp {
    Add,
    Sub,
}

impl AddOp {
    pub fn flip(self) -> AddOp {
        match self {
            AddOp::Add => AddOp::Sub,
            AddOp::Sub => AddOp::Add,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub first: Term,
    pub rest: Vec<(AddOp, Term)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cmp {
    pub lhs: Expr,
    pub op: Op,
    pub rhs: Expr,
}

impl Term {
    fn to_lin(&self, var: &mut impl FnMut(&str) -> usize) -> LinExpr {
        match self {
            Term::Const(k) => LinExpr::from_constant(k.clone()),
            Term::Var(name) => LinExpr::var(var(name)),
            Term::Scaled(c, name) => LinExpr::term(c.clone(), var(name)),
            Term::Group(k, e) => e.to_lin_with(var).scale(k),
        }
    }

    /// Name of a plain or scaled variable term.
    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Const(_) | Term::Group(..) => None,
            Term::Var(n) | Term::Scaled(_, n) => Some(n),
        }
    }

    fn has_var(&self) -> bool {
        match self {
            Term::Const(_) => false,
            Term::Var(_) | Term::Scaled(..) => true,
            Term::Group(_, e) => e.terms().any(Term::has_var),
        }
    }
}

impl Expr {
    pub fn constant(k: impl Into<BigInt>) -> Expr {
        Expr {
            first: Term::Const(k.into()),
            rest: Vec::new(),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        std::iter::once(&self.first).chain(self.rest.iter().map(|(_, t)| t))
    }

    /// Variable names in order of appearance, groups included.
    pub fn var_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for t in self.terms() {
            match t {
                Term::Group(_, e) => out.extend(e.var_names()),
                t => out.extend(t.var_name()),
            }
        }
        out
    }

    /// Linear form, resolving each variable name through `var`.
    pub fn to_lin(&self, mut var: impl FnMut(&str) -> usize) -> LinExpr {
        self.to_lin_with(&mut var)
    }

    fn to_lin_with(&self, var: &mut impl FnMut(&str) -> usize) -> LinExpr {
        let mut acc = self.first.to_lin(var);
        for (op, t) in &self.rest {
            let lin = t.to_lin(var);
            acc = match op {
                AddOp::Add => acc.add(&lin),
                AddOp::Sub => acc.sub(&lin),
            };
        }
        acc
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(k) => write!(f, "{k}"),
            Term::Var(n) => f.write_str(n),
            Term::Scaled(c, n) => write!(f, "{c}*{n}"),
            Term::Group(k, e) if *k == BigInt::from(1) => write!(f, "({e})"),
            Term::Group(k, e) if *k == BigInt::from(-1) => write!(f, "-({e})"),
            Term::Group(k, e) => write!(f, "{k}*({e})"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for (op, t) in &self.rest {
            let sym = match op {
                AddOp::Add => '+',
                AddOp::Sub => '-',
            };
            write!(f, " {sym} {t}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

#[derive(Debug)]
pub(crate) enum ExprError {
    Syntax(usize, String),
    Nonlinear(usize, String),
}

fn parse_int(digits: &str) -> BigInt {
    digits.parse().expect("lexer only yields digit strings")
}

fn parse_term(cur: &mut Cursor) -> Result<Term, ExprError> {
    let pos = cur.pos();
    let negative = cur.eat(&Tok::Minus);
    let term = match cur.next() {
        Some(Tok::Int(digits)) => {
            let mut k = parse_int(&digits);
            if negative {
                k = -k;
            }
            if cur.eat(&Tok::Star) {
                let at = cur.pos();
                match cur.next() {
                    Some(Tok::Ident(name)) => Term::Scaled(k, name),
                    Some(Tok::LParen) => Term::Group(k, Box::new(parse_group_rest(cur)?)),
                    Some(Tok::Int(_)) => {
                        return Err(ExprError::Syntax(at, "constant products must be folded".into()))
                    }
                    _ => return Err(ExprError::Syntax(at, "expected identifier after `*`".into())),
                }
            } else {
                Term::Const(k)
            }
        }
        // `-x` is accepted as shorthand for `-1*x`.
        Some(Tok::Ident(name)) if negative => Term::Scaled(BigInt::from(-1), name),
        Some(Tok::Ident(name)) => Term::Var(name),
        Some(Tok::LParen) => {
            let k = BigInt::from(if negative { -1 } else { 1 });
            Term::Group(k, Box::new(parse_group_rest(cur)?))
        }
        _ => {
            return Err(ExprError::Syntax(
                pos,
                "expected integer or identifier".to_string(),
            ))
        }
    };
    let at = cur.pos();
    match cur.peek() {
        Some(Tok::Caret) => Err(ExprError::Nonlinear(at, "powers are not linear".into())),
        Some(Tok::Star) => match cur.peek_at(1) {
            Some(Tok::Ident(_) | Tok::LParen) if term.has_var() => Err(ExprError::Nonlinear(
                at,
                "product of variables is not linear".into(),
            )),
            _ => Err(ExprError::Syntax(at, "unexpected `*`".into())),
        },
        _ => Ok(term),
    }
}

/// Parses `expr ")"` after an opening parenthesis.
fn parse_group_rest(cur: &mut Cursor) -> Result<Expr, ExprError> {
    let e = parse_expr(cur)?;
    let at = cur.pos();
    if !cur.eat(&Tok::RParen) {
        return Err(ExprError::Syntax(
            at,
            format!("expected `)`, found {}", cur.describe_next()),
        ));
    }
    Ok(e)
}

pub(crate) fn parse_expr(cur: &mut Cursor) -> Result<Expr, ExprError> {
    let first = parse_term(cur)?;
    let mut rest = Vec::new();
    loop {
        let op = match cur.peek() {
            Some(Tok::Plus) => AddOp::Add,
            Some(Tok::Minus) => AddOp::Sub,
            _ => break,
        };
        cur.next();
        rest.push((op, parse_term(cur)?));
    }
    Ok(Expr { first, rest })
}

pub(crate) fn parse_relop(cur: &mut Cursor) -> Result<Op, ExprError> {
    let pos = cur.pos();
    let op = match cur.peek() {
        Some(Tok::EqEq) => Op::Eq,
        Some(Tok::Neq) => Op::Neq,
        Some(Tok::Le) => Op::Leq,
        Some(Tok::Lt) => Op::Lt,
        Some(Tok::Gt) => Op::Gt,
        Some(Tok::Ge) => Op::Geq,
        _ => {
            return Err(ExprError::Syntax(
                pos,
                format!("expected comparison operator, found {}", cur.describe_next()),
            ))
        }
    };
    cur.next();
    Ok(op)
}

pub(crate) fn parse_cmp(cur: &mut Cursor) -> Result<Cmp, ExprError> {
    let lhs = parse_expr(cur)?;
    let op = parse_relop(cur)?;
    let rhs = parse_expr(cur)?;
    Ok(Cmp { lhs, op, rhs })
}
