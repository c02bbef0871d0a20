//! Concrete AST interpreter. Shares no code with the symbolic engine beyond
//! the syntax tree, so it can replay generated tests independently.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::Zero;

use super::lang::{Program, Stmt};
use super::LeafKind;
use crate::expr::{AddOp, Cmp, Expr, Term};
use crate::pc::Op;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    /// Every branch, loop-guard and assert decision in execution order.
    pub decisions: Vec<bool>,
    pub leaf: LeafKind,
}

fn eval(e: &Expr, env: &HashMap<String, BigInt>) -> BigInt {
    let term = |t: &Term| -> BigInt {
        match t {
            Term::Const(k) => k.clone(),
            Term::Var(n) => env.get(n).cloned().unwrap_or_default(),
            Term::Scaled(c, n) => c * env.get(n).cloned().unwrap_or_default(),
            Term::Group(k, inner) => k * eval(inner, env),
        }
    };
    let mut acc = term(&e.first);
    for (op, t) in &e.rest {
        match op {
            AddOp::Add => acc += term(t),
            AddOp::Sub => acc -= term(t),
        }
    }
    acc
}

fn holds(c: &Cmp, env: &HashMap<String, BigInt>) -> bool {
    let l = eval(&c.lhs, env);
    let r = eval(&c.rhs, env);
    match c.op {
        Op::Eq => l == r,
        Op::Neq => l != r,
        Op::Leq => l <= r,
        Op::Lt => l < r,
        Op::Gt => l > r,
        Op::Geq => l >= r,
    }
}

enum Flow {
    Next,
    Stop(LeafKind),
}

fn exec(stmts: &[Stmt], env: &mut HashMap<String, BigInt>, trail: &mut Vec<bool>) -> Flow {
    for s in stmts {
        let flow = match s {
            Stmt::Assign(v, e) => {
                let x = eval(e, env);
                env.insert(v.clone(), x);
                Flow::Next
            }
            Stmt::If { cond, then, els } => {
                let taken = holds(cond, env);
                trail.push(taken);
                if taken {
                    exec(then, env, trail)
                } else if let Some(e) = els {
                    exec(e, env, trail)
                } else {
                    Flow::Next
                }
            }
            Stmt::While { cond, bound, body } => {
                let mut flow = Flow::Next;
                for _ in 0..*bound {
                    let taken = holds(cond, env);
                    trail.push(taken);
                    if !taken {
                        break;
                    }
                    flow = exec(body, env, trail);
                    if matches!(flow, Flow::Stop(_)) {
                        break;
                    }
                }
                flow
            }
            Stmt::Assert(c) => {
                let ok = holds(c, env);
                trail.push(ok);
                if ok {
                    Flow::Next
                } else {
                    Flow::Stop(LeafKind::AssertFail)
                }
            }
            Stmt::Halt => Flow::Stop(LeafKind::Halt),
        };
        if let Flow::Stop(_) = flow {
            return flow;
        }
    }
    Flow::Next
}

/// Runs `p` on concrete inputs (missing parameters read as 0).
pub fn run_concrete(p: &Program, inputs: &HashMap<String, BigInt>) -> Outcome {
    let mut env: HashMap<String, BigInt> = p
        .params
        .iter()
        .map(|n| (n.clone(), inputs.get(n).cloned().unwrap_or_else(BigInt::zero)))
        .collect();
    let mut decisions = Vec::new();
    let leaf = match exec(&p.body, &mut env, &mut decisions) {
        Flow::Stop(k) => k,
        Flow::Next => LeafKind::Halt,
    };
    Outcome { decisions, leaf }
}
