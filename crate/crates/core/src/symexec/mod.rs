//! Depth-first symbolic execution with a pluggable satisfiability check.
//!
//! Every popped state's path condition is checked before the state runs. The
//! classifier backend trusts a "satisfiable" answer and re-solves every
//! "unsatisfiable" or unsupported one, so no feasible path is ever pruned;
//! infeasible paths it lets through are filtered when the leaf is solved for
//! a test input.

mod interp;
mod lang;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::time::Instant;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Serialize, Serializer};

pub use interp::{run_concrete, Outcome};
pub use lang::{parse_program, Program, ProgramError, Stmt};

use crate::bank::{Classification, ClassifierBank};
use crate::cache::SolutionCache;
use crate::expr::Cmp;
use crate::pc::{canonize, format_pc, LinExpr, LinearConstraint, PathCondition};
use crate::solver::{Solver, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    Halt,
    AssertFail,
}

/// Flat code over variable slots; loops are already unrolled.
#[derive(Clone, Debug)]
enum Inst {
    Assign(usize, LinExpr),
    /// Falls through when the condition holds, else jumps.
    Branch(LinearConstraint, usize),
    Jump(usize),
    Assert(LinearConstraint),
    Halt,
}

struct Compiled {
    insts: Vec<Inst>,
    params: Vec<String>,
    slots: usize,
}

fn compile(p: &Program) -> Compiled {
    let vars = p.variables();
    let slot: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let lin = |c: &Cmp| {
        let l = c.lhs.to_lin(|n| slot[n]);
        let r = c.rhs.to_lin(|n| slot[n]);
        LinearConstraint::compare(&l, c.op, &r)
    };
    fn emit(stmts: &[Stmt], out: &mut Vec<Inst>, slot: &HashMap<&str, usize>, lin: &dyn Fn(&Cmp) -> LinearConstraint) {
        for s in stmts {
            match s {
                Stmt::Assign(v, e) => out.push(Inst::Assign(slot[v.as_str()], e.to_lin(|n| slot[n]))),
                Stmt::If { cond, then, els } => {
                    let br = out.len();
                    out.push(Inst::Branch(lin(cond), 0));
                    emit(then, out, slot, lin);
                    match els {
                        Some(e) => {
                            let j = out.len();
                            out.push(Inst::Jump(0));
                            let else_at = out.len();
                            emit(e, out, slot, lin);
                            let end = out.len();
                            out[br] = Inst::Branch(lin(cond), else_at);
                            out[j] = Inst::Jump(end);
                        }
                        None => {
                            let end = out.len();
                            out[br] = Inst::Branch(lin(cond), end);
                        }
                    }
                }
                Stmt::While { cond, bound, body } => {
                    let mut guards = Vec::new();
                    for _ in 0..*bound {
                        guards.push(out.len());
                        out.push(Inst::Branch(lin(cond), 0));
                        emit(body, out, slot, lin);
                    }
                    let exit = out.len();
                    for g in guards {
                        out[g] = Inst::Branch(lin(cond), exit);
                    }
                }
                Stmt::Assert(c) => out.push(Inst::Assert(lin(c))),
                Stmt::Halt => out.push(Inst::Halt),
            }
        }
    }
    let mut insts = Vec::new();
    emit(&p.body, &mut insts, &slot, &lin);
    insts.push(Inst::Halt);
    Compiled {
        insts,
        params: p.params.clone(),
        slots: vars.len(),
    }
}

pub enum Backend<'a> {
    SolverOnly,
    Classifier(&'a ClassifierBank),
    Cache(&'a mut SolutionCache),
}

impl Backend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::SolverOnly => "solver",
            Backend::Classifier(_) => "classifier",
            Backend::Cache(_) => "cache",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub solver: Solver,
    /// Popped states after which the run stops and is marked incomplete.
    pub max_states: usize,
    /// Keep every checked path condition with its verdict in the report.
    pub record_checks: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            solver: Solver::default(),
            max_states: 100_000,
            record_checks: false,
        }
    }
}

fn ser_inputs<S: Serializer>(inputs: &BTreeMap<String, BigInt>, s: S) -> Result<S::Ok, S::Error> {
    let m: BTreeMap<&String, serde_json::Value> = inputs
        .iter()
        .map(|(k, v)| {
            let j = v.to_i64().map_or_else(|| serde_json::json!(v.to_string()), |x| serde_json::json!(x));
            (k, j)
        })
        .collect();
    m.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestCase {
    pub path: usize,
    #[serde(serialize_with = "ser_inputs")]
    pub inputs: BTreeMap<String, BigInt>,
    pub leaf: LeafKind,
    /// Canonical text of the leaf path condition.
    pub pc: String,
    /// Branch, loop-guard and assert outcomes along the path.
    pub decisions: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRecord {
    pub pc: PathCondition,
    /// `None` when the solver gave up.
    pub sat: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub program: String,
    pub backend: String,
    pub pcs_checked: usize,
    /// Popped states whose check said feasible.
    pub states_explored: usize,
    pub pruned_states: usize,
    pub leaf_states: usize,
    /// Leaves whose path condition turned out unsatisfiable.
    pub infeasible_leaves: usize,
    pub unknown_paths: usize,
    pub solver_calls: usize,
    pub classifier_calls: usize,
    pub unsupported_checks: usize,
    pub cache_hits: usize,
    /// Classifier "unsatisfiable" answers overturned by the solver.
    pub type1_corrections: usize,
    pub type1_count: Option<usize>,
    pub type2_count: Option<usize>,
    /// Ground-truth solves made only for the verified tallies.
    pub oracle_calls: usize,
    pub complete: bool,
    pub tests: Vec<TestCase>,
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub checks: Vec<CheckRecord>,
}

impl RunReport {
    pub fn leaf_pc_set(&self) -> BTreeSet<String> {
        self.tests.iter().map(|t| t.pc.clone()).collect()
    }

    /// One `{"path", "inputs", "leaf"}` object per line.
    pub fn write_tests_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            path: usize,
            #[serde(serialize_with = "ser_inputs")]
            inputs: &'a BTreeMap<String, BigInt>,
            leaf: LeafKind,
        }
        for t in &self.tests {
            let line = Line {
                path: t.path,
                inputs: &t.inputs,
                leaf: t.leaf,
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone)]
enum Loc {
    At(usize),
    Abort,
}

#[derive(Clone)]
struct State {
    loc: Loc,
    store: Vec<LinExpr>,
    pc: PathCondition,
    decisions: Vec<bool>,
}

enum Feasibility {
    Feasible,
    Infeasible,
    Unknown,
}

struct Engine<'a, 'b> {
    backend: &'b mut Backend<'a>,
    opts: &'b RunOptions,
    verify: bool,
    report: RunReport,
}

impl Engine<'_, '_> {
    fn solve(&mut self, pc: &PathCondition) -> Option<Verdict> {
        self.report.solver_calls += 1;
        match self.opts.solver.solve(pc) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("solver gave up on {pc}: {e}");
                None
            }
        }
    }

    fn feasibility(sat: Option<bool>) -> Feasibility {
        match sat {
            Some(true) => Feasibility::Feasible,
            Some(false) => Feasibility::Infeasible,
            None => Feasibility::Unknown,
        }
    }

    fn check(&mut self, pc: &PathCondition) -> Feasibility {
        self.report.pcs_checked += 1;
        let sat = match &mut *self.backend {
            Backend::SolverOnly => self.solve(pc).map(|v| v.is_sat()),
            Backend::Classifier(bank) => {
                self.report.classifier_calls += 1;
                match bank.check(pc) {
                    Classification::Classified(true) => {
                        if self.verify {
                            self.report.oracle_calls += 1;
                            if let Ok(Verdict::Unsat) = self.opts.solver.solve(pc) {
                                *self.report.type2_count.get_or_insert(0) += 1;
                            }
                        }
                        Some(true)
                    }
                    Classification::Classified(false) => {
                        let sat = self.solve(pc).map(|v| v.is_sat());
                        if sat == Some(true) {
                            self.report.type1_corrections += 1;
                            if self.verify {
                                *self.report.type1_count.get_or_insert(0) += 1;
                            }
                        }
                        sat
                    }
                    Classification::Unsupported(_) => {
                        self.report.unsupported_checks += 1;
                        self.solve(pc).map(|v| v.is_sat())
                    }
                }
            }
            Backend::Cache(cache) => match cache.check(pc, &self.opts.solver) {
                Ok((sat, true)) => {
                    self.report.cache_hits += 1;
                    Some(sat)
                }
                Ok((sat, false)) => {
                    self.report.solver_calls += 1;
                    Some(sat)
                }
                Err(e) => {
                    self.report.solver_calls += 1;
                    log::warn!("solver gave up on {pc}: {e}");
                    None
                }
            },
        };
        if self.opts.record_checks {
            self.report.checks.push(CheckRecord { pc: pc.clone(), sat });
        }
        Self::feasibility(sat)
    }

    fn leaf(&mut self, state: &State, kind: LeafKind, params: &[String]) {
        self.report.leaf_states += 1;
        match self.solve(&state.pc) {
            Some(Verdict::Sat(model)) => {
                let inputs = params
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), model.get(&i).cloned().unwrap_or_default()))
                    .collect();
                let path = self.report.tests.len();
                self.report.tests.push(TestCase {
                    path,
                    inputs,
                    leaf: kind,
                    pc: format_pc(&canonize(&state.pc)),
                    decisions: state.decisions.clone(),
                });
            }
            Some(Verdict::Unsat) => self.report.infeasible_leaves += 1,
            None => self.report.unknown_paths += 1,
        }
    }

    fn run(mut self, prog: &Compiled) -> RunReport {
        let start = Instant::now();
        if self.verify {
            self.report.type1_count = Some(0);
            self.report.type2_count = Some(0);
        }
        let init = State {
            loc: Loc::At(0),
            store: (0..prog.slots)
                .map(|i| {
                    if i < prog.params.len() {
                        LinExpr::var(i)
                    } else {
                        LinExpr::zero()
                    }
                })
                .collect(),
            pc: PathCondition::truth(),
            decisions: Vec::new(),
        };
        let mut stack = vec![init];
        let mut popped = 0;
        self.report.complete = true;
        while let Some(mut s) = stack.pop() {
            popped += 1;
            if popped > self.opts.max_states {
                self.report.complete = false;
                break;
            }
            match self.check(&s.pc) {
                Feasibility::Feasible => {}
                Feasibility::Infeasible => {
                    self.report.pruned_states += 1;
                    continue;
                }
                Feasibility::Unknown => {
                    self.report.unknown_paths += 1;
                    continue;
                }
            }
            self.report.states_explored += 1;
            let mut at = match s.loc {
                Loc::At(i) => i,
                Loc::Abort => {
                    self.leaf(&s, LeafKind::AssertFail, &prog.params);
                    continue;
                }
            };
            loop {
                match &prog.insts[at] {
                    Inst::Assign(slot, e) => {
                        s.store[*slot] = e.substitute(|v| s.store[v].clone());
                        at += 1;
                    }
                    Inst::Jump(t) => at = *t,
                    Inst::Branch(c, else_at) => {
                        let c = instantiate(c, &s.store);
                        // True side pushed first, so the false side runs first.
                        stack.push(successor(&s, Loc::At(at + 1), c.clone(), true));
                        stack.push(successor(&s, Loc::At(*else_at), c.negate(), false));
                        break;
                    }
                    Inst::Assert(c) => {
                        let c = instantiate(c, &s.store);
                        stack.push(successor(&s, Loc::At(at + 1), c.clone(), true));
                        stack.push(successor(&s, Loc::Abort, c.negate(), false));
                        break;
                    }
                    Inst::Halt => {
                        self.leaf(&s, LeafKind::Halt, &prog.params);
                        break;
                    }
                }
            }
        }
        self.report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self.report
    }
}

fn instantiate(c: &LinearConstraint, store: &[LinExpr]) -> LinearConstraint {
    LinearConstraint::new(c.expr().substitute(|v| store[v].clone()), c.op())
}

fn successor(s: &State, loc: Loc, c: LinearConstraint, taken: bool) -> State {
    let mut decisions = s.decisions.clone();
    decisions.push(taken);
    State {
        loc,
        store: s.store.clone(),
        pc: s.pc.and(c),
        decisions,
    }
}

/// Explores `p` with the given backend.
pub fn run(p: &Program, backend: &mut Backend<'_>, opts: &RunOptions) -> RunReport {
    let name = backend.name().to_string();
    let engine = Engine {
        backend,
        opts,
        verify: false,
        report: RunReport {
            program: p.name.clone(),
            backend: name,
            ..RunReport::default()
        },
    };
    engine.run(&compile(p))
}

/// Classifier-backed run that also solves every classifier "satisfiable"
/// answer to count both kinds of misclassification. Exploration is the same
/// as [`run`] with the classifier backend.
pub fn run_verified(p: &Program, bank: &ClassifierBank, opts: &RunOptions) -> RunReport {
    let mut backend = Backend::Classifier(bank);
    let engine = Engine {
        backend: &mut backend,
        opts,
        verify: true,
        report: RunReport {
            program: p.name.clone(),
            backend: "classifier-verified".into(),
            ..RunReport::default()
        },
    };
    engine.run(&compile(p))
}
