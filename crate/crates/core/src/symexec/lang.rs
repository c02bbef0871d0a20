//! The toy imperative language: integer parameters, linear assignments,
//! if/else, loops with a static iteration bound, assert and halt.
//!
//! ```text
//! prog  := "fn" ident "(" (ident ("," ident)*)? ")" block
//! block := "{" stmt* "}"
//! stmt  := ident ":=" expr ";"
//!        | "if" "(" cmp ")" block ("else" (block | if-stmt))?
//!        | "while" "(" cmp ")" "bound" int block
//!        | "assert" "(" cmp ")" ";"
//!        | "halt" ";"
//! ```
//!
//! The `;` closing a simple statement may be omitted before `}`, and a stray
//! `;` is an empty statement. `//` starts a line comment.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::expr::{parse_cmp, parse_expr, Cmp, Expr, ExprError};
use crate::lex::{tokenize, Cursor, Tok};

const KEYWORDS: [&str; 7] = ["fn", "if", "else", "while", "bound", "assert", "halt"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("nonlinear expression at byte {pos}: {msg}")]
    Nonlinear { pos: usize, msg: String },
    #[error("variable `{0}` is never declared or assigned")]
    UndeclaredVar(String),
}

impl From<ExprError> for ProgramError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Syntax(pos, msg) => ProgramError::Syntax { pos, msg },
            ExprError::Nonlinear(pos, msg) => ProgramError::Nonlinear { pos, msg },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(String, Expr),
    If {
        cond: Cmp,
        then: Vec<Stmt>,
        els: Option<Vec<Stmt>>,
    },
    /// Runs `body` while `cond` holds, at most `bound` times.
    While {
        cond: Cmp,
        bound: u32,
        body: Vec<Stmt>,
    },
    Assert(Cmp),
    Halt,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

impl Program {
    /// Parameters first, then assigned locals in order of first assignment.
    pub fn variables(&self) -> Vec<String> {
        let mut vars = self.params.clone();
        fn walk(stmts: &[Stmt], vars: &mut Vec<String>) {
            for s in stmts {
                match s {
                    Stmt::Assign(v, _) => {
                        if !vars.contains(v) {
                            vars.push(v.clone());
                        }
                    }
                    Stmt::If { then, els, .. } => {
                        walk(then, vars);
                        if let Some(e) = els {
                            walk(e, vars);
                        }
                    }
                    Stmt::While { body, .. } => walk(body, vars),
                    Stmt::Assert(_) | Stmt::Halt => {}
                }
            }
        }
        walk(&self.body, &mut vars);
        vars
    }

    /// Every name read must be a parameter or assigned somewhere. Locals read
    /// before their first assignment on a path hold 0.
    pub fn check_declared(&self) -> Result<(), ProgramError> {
        let known: BTreeSet<String> = self.variables().into_iter().collect();
        let mut err = None;
        self.visit_exprs(&mut |e| {
            if err.is_none() {
                if let Some(n) = e.var_names().into_iter().find(|n| !known.contains(*n)) {
                    err = Some(ProgramError::UndeclaredVar(n.to_string()));
                }
            }
        });
        err.map_or(Ok(()), Err)
    }

    fn visit_exprs(&self, f: &mut impl FnMut(&Expr)) {
        fn walk(stmts: &[Stmt], f: &mut impl FnMut(&Expr)) {
            for s in stmts {
                match s {
                    Stmt::Assign(_, e) => f(e),
                    Stmt::If { cond, then, els } => {
                        f(&cond.lhs);
                        f(&cond.rhs);
                        walk(then, f);
                        if let Some(e) = els {
                            walk(e, f);
                        }
                    }
                    Stmt::While { cond, body, .. } => {
                        f(&cond.lhs);
                        f(&cond.rhs);
                        walk(body, f);
                    }
                    Stmt::Assert(c) => {
                        f(&c.lhs);
                        f(&c.rhs);
                    }
                    Stmt::Halt => {}
                }
            }
        }
        walk(&self.body, f);
    }

    /// Deepest nesting of `if`/`while` statements.
    pub fn max_depth(&self) -> usize {
        fn depth(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::If { then, els, .. } => {
                        1 + depth(then).max(els.as_deref().map_or(0, depth))
                    }
                    Stmt::While { body, .. } => 1 + depth(body),
                    _ => 0,
                })
                .max()
                .unwrap_or(0)
        }
        depth(&self.body)
    }
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ProgramError> {
        Err(ProgramError::Syntax {
            pos: self.cur.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ProgramError> {
        if self.cur.eat(&tok) {
            Ok(())
        } else {
            self.err(format!("expected {tok}, found {}", self.cur.describe_next()))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.cur.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.cur.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, ProgramError> {
        match self.cur.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.cur.next();
                Ok(s)
            }
            _ => self.err(format!("expected identifier, found {}", self.cur.describe_next())),
        }
    }

    fn program(&mut self) -> Result<Program, ProgramError> {
        if !self.keyword("fn") {
            return self.err("expected `fn`");
        }
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.cur.eat(&Tok::RParen) {
            loop {
                let at = self.cur.pos();
                let p = self.ident()?;
                if params.contains(&p) {
                    return Err(ProgramError::Syntax {
                        pos: at,
                        msg: format!("duplicate parameter `{p}`"),
                    });
                }
                params.push(p);
                if self.cur.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        let body = self.block()?;
        if !self.cur.at_end() {
            return self.err(format!("trailing input: {}", self.cur.describe_next()));
        }
        Ok(Program { name, params, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ProgramError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.cur.eat(&Tok::RBrace) {
            if self.cur.at_end() {
                return self.err("unclosed block");
            }
            if self.cur.eat(&Tok::Semi) {
                continue;
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn end_simple(&mut self) -> Result<(), ProgramError> {
        if self.cur.eat(&Tok::Semi) || self.cur.peek() == Some(&Tok::RBrace) {
            Ok(())
        } else {
            self.err(format!("expected `;`, found {}", self.cur.describe_next()))
        }
    }

    fn paren_cmp(&mut self) -> Result<Cmp, ProgramError> {
        self.expect(Tok::LParen)?;
        let c = parse_cmp(&mut self.cur)?;
        self.expect(Tok::RParen)?;
        Ok(c)
    }

    fn stmt(&mut self) -> Result<Stmt, ProgramError> {
        if self.keyword("if") {
            let cond = self.paren_cmp()?;
            let then = self.block()?;
            let els = if self.keyword("else") {
                if matches!(self.cur.peek(), Some(Tok::Ident(s)) if s == "if") {
                    Some(vec![self.stmt()?])
                } else {
                    Some(self.block()?)
                }
            } else {
                None
            };
            return Ok(Stmt::If { cond, then, els });
        }
        if self.keyword("while") {
            let cond = self.paren_cmp()?;
            if !self.keyword("bound") {
                return self.err("loops need a `bound N` annotation");
            }
            let bound = match self.cur.next() {
                Some(Tok::Int(d)) => d
                    .parse::<u32>()
                    .map_err(|_| ProgramError::Syntax {
                        pos: self.cur.pos(),
                        msg: "loop bound too large".into(),
                    })?,
                _ => return self.err("expected a non-negative loop bound"),
            };
            let body = self.block()?;
            return Ok(Stmt::While { cond, bound, body });
        }
        if self.keyword("assert") {
            let c = self.paren_cmp()?;
            self.end_simple()?;
            return Ok(Stmt::Assert(c));
        }
        if self.keyword("halt") {
            self.end_simple()?;
            return Ok(Stmt::Halt);
        }
        let name = self.ident()?;
        self.expect(Tok::Assign)?;
        let e = parse_expr(&mut self.cur)?;
        self.end_simple()?;
        Ok(Stmt::Assign(name, e))
    }
}

/// Parses and statically checks a program.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let toks = tokenize(text).map_err(|e| ProgramError::Syntax {
        pos: e.pos,
        msg: e.msg,
    })?;
    let mut p = Parser {
        cur: Cursor::new(toks, text.len()),
    };
    let prog = p.program()?;
    prog.check_declared()?;
    Ok(prog)
}

fn write_block(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], indent: usize) -> fmt::Result {
    writeln!(f, "{{")?;
    for s in stmts {
        write_stmt(f, s, indent + 1)?;
    }
    write!(f, "{}}}", "    ".repeat(indent))
}

fn write_stmt(f: &mut fmt::Formatter<'_>, s: &Stmt, indent: usize) -> fmt::Result {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Assign(v, e) => writeln!(f, "{pad}{v} := {e};"),
        Stmt::If { cond, then, els } => {
            write!(f, "{pad}if ({cond}) ")?;
            write_block(f, then, indent)?;
            if let Some(e) = els {
                write!(f, " else ")?;
                write_block(f, e, indent)?;
            }
            writeln!(f)
        }
        Stmt::While { cond, bound, body } => {
            write!(f, "{pad}while ({cond}) bound {bound} ")?;
            write_block(f, body, indent)?;
            writeln!(f)
        }
        Stmt::Assert(c) => writeln!(f, "{pad}assert ({c});"),
        Stmt::Halt => writeln!(f, "{pad}halt;"),
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn {}({}) ", self.name, self.params.join(", "))?;
        write_block(f, &self.body, 0)?;
        writeln!(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_INPUTS: &str = "
        fn example(x, y) {
            if (x > y) {
                if (y > 0) { x := y + x; } else { x := y - x; }
            } else {
                if (x > 0) { y := x + y; } else { y := x - y; }
            }
        }";

    #[test]
    fn parses_two_input_example() {
        let p = parse_program(TWO_INPUTS).unwrap();
        assert_eq!(p.params, vec!["x", "y"]);
        assert_eq!(p.body.len(), 1);
        assert_eq!(p.max_depth(), 2);
    }

    #[test]
    fn loops_need_a_bound() {
        let e = parse_program("fn f(x) { while (x < 3) { x := x + 1; } }").unwrap_err();
        assert!(matches!(e, ProgramError::Syntax { .. }), "{e}");
        let p = parse_program("fn f(x) { while (x < 3) bound 4 { x := x + 1; } }").unwrap();
        assert!(matches!(p.body[0], Stmt::While { bound: 4, .. }));
    }

    #[test]
    fn rejects_nonlinear_and_undeclared() {
        let e = parse_program("fn f(x, y) { x := x*y; }").unwrap_err();
        assert!(matches!(e, ProgramError::Nonlinear { .. }), "{e}");
        let e = parse_program("fn f(x) { x := z + 1; }").unwrap_err();
        assert_eq!(e, ProgramError::UndeclaredVar("z".into()));
        // A local assigned anywhere counts as declared.
        assert!(parse_program("fn f(x) { if (t > 0) { halt; } t := x; }").is_ok());
        assert!(parse_program("fn f(if) { halt; }").is_err());
        assert!(parse_program("fn f(x, x) { halt; }").is_err());
    }

    #[test]
    fn lenient_separators_and_comments() {
        let p = parse_program(
            "fn f(x) { // leading comment
                if (x > 0) { if (x + 1 <= 0) { halt } }; halt
            }",
        )
        .unwrap();
        assert_eq!(p.body.len(), 2);
    }

    #[test]
    fn else_if_chains() {
        let p = parse_program("fn f(x) { if (x > 0) { halt; } else if (x < -3) { halt; } else { x := 1; } }").unwrap();
        let Stmt::If { els: Some(e), .. } = &p.body[0] else { panic!() };
        assert!(matches!(e[0], Stmt::If { .. }));
    }

    #[test]
    fn display_round_trips() {
        let texts = [
            TWO_INPUTS,
            "fn g(a, b, c) { t := 2*a - b + 3; while (t > c) bound 3 { t := t - 1; assert (t != 5); } if (a == b) { halt; } c := -(a - 2*b) + 1; }",
        ];
        for t in texts {
            let p = parse_program(t).unwrap();
            let printed = p.to_string();
            assert_eq!(parse_program(&printed).unwrap(), p, "{printed}");
        }
    }
}
