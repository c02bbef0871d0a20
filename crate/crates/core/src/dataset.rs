//! Labeled PC corpora: random programs, single-point mutants, solver-only
//! exploration to label every checked PC, then dedup, balance and split.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{AddOp, Cmp, Expr, Term};
use crate::pc::{canonize, format_pc, parse_pc, Op, PathCondition};
use crate::cache::SolutionCache;
use crate::solver::Solver;
use crate::symexec::{self, Backend, Program, RunOptions, Stmt};
use crate::vectorize::{matrix_key, vectorize};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("program has no guard to mutate")]
    NoMutationSite,
    #[error("bad split fraction {0}: must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One labeled path condition. `pc` is canonical text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub pc: String,
    pub sat: bool,
    pub src: String,
}

impl DatasetRecord {
    pub fn path_condition(&self) -> PathCondition {
        parse_pc(&self.pc).expect("records hold canonical text")
    }

    pub fn d(&self) -> usize {
        if self.pc == "0 == 0" {
            0
        } else {
            self.pc.split(" && ").count()
        }
    }
}

/// Knobs for the random program generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeParams {
    pub min_params: usize,
    pub max_params: usize,
    /// Maximum `if`/`while` nesting.
    pub depth: usize,
    /// Statements per block, drawn from `1..=max_stmts`.
    pub max_stmts: usize,
    pub top_stmts: usize,
    pub p_branch: f64,
    pub p_else: f64,
    pub p_loop: f64,
    pub p_assert: f64,
    /// Share of guards over a single variable.
    pub p_unary_guard: f64,
    /// Chance that a guard reads the same variables as the previous one,
    /// as nested range checks on one input do.
    pub p_reuse_vars: f64,
    pub max_coeff: i64,
    pub max_const: i64,
    pub max_loop_bound: u32,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            min_params: 2,
            max_params: 4,
            depth: 4,
            max_stmts: 3,
            top_stmts: 4,
            p_branch: 0.6,
            p_else: 0.5,
            p_loop: 0.1,
            p_assert: 0.1,
            p_unary_guard: 0.6,
            p_reuse_vars: 0.4,
            max_coeff: 3,
            max_const: 10,
            max_loop_bound: 3,
        }
    }
}

const NAMES: [&str; 8] = ["x", "y", "z", "u", "v", "w", "r", "s"];
const OPS: [Op; 6] = [Op::Eq, Op::Neq, Op::Lt, Op::Leq, Op::Gt, Op::Geq];

struct Gen<'a> {
    rng: ChaCha8Rng,
    shape: &'a ShapeParams,
    vars: Vec<String>,
    last_guard: Vec<String>,
}

impl Gen<'_> {
    fn konst(&mut self) -> i64 {
        self.rng.random_range(-self.shape.max_const..=self.shape.max_const)
    }

    fn coeff(&mut self) -> i64 {
        let c = if self.rng.random_bool(0.6) {
            1
        } else {
            self.rng.random_range(1..=self.shape.max_coeff.max(1))
        };
        if self.rng.random_bool(0.5) {
            c
        } else {
            -c
        }
    }

    fn var_term(&mut self, name: &str) -> (AddOp, Term) {
        let c = self.coeff();
        let op = if c < 0 { AddOp::Sub } else { AddOp::Add };
        let t = match c.abs() {
            1 => Term::Var(name.to_string()),
            a => Term::Scaled(a.into(), name.to_string()),
        };
        (op, t)
    }

    fn linear(&mut self, names: &[String]) -> Expr {
        let mut terms: Vec<(AddOp, Term)> = names.iter().map(|n| self.var_term(n)).collect();
        let (op0, first) = terms.remove(0);
        let first = match (op0, first) {
            (AddOp::Add, t) => t,
            (AddOp::Sub, Term::Var(n)) => Term::Scaled((-1).into(), n),
            (AddOp::Sub, Term::Scaled(c, n)) => Term::Scaled(-c, n),
            (_, t) => t,
        };
        Expr { first, rest: terms }
    }

    fn pick_vars(&mut self, k: usize) -> Vec<String> {
        let mut v = self.vars.clone();
        v.shuffle(&mut self.rng);
        v.truncate(k);
        v
    }

    fn guard(&mut self) -> Cmp {
        let k = if self.rng.random_bool(self.shape.p_unary_guard) || self.vars.len() < 2 {
            1
        } else {
            2
        };
        let names = if !self.last_guard.is_empty() && self.rng.random_bool(self.shape.p_reuse_vars) {
            self.last_guard.clone()
        } else {
            self.pick_vars(k)
        };
        self.last_guard = names.clone();
        let lhs = self.linear(&names);
        let op = OPS[self.rng.random_range(0..OPS.len())];
        Cmp {
            lhs,
            op,
            rhs: Expr::constant(self.konst()),
        }
    }

    fn assign(&mut self) -> Stmt {
        let target = self.vars[self.rng.random_range(0..self.vars.len())].clone();
        let mut rest = Vec::new();
        if self.rng.random_bool(0.5) {
            let other = self.vars[self.rng.random_range(0..self.vars.len())].clone();
            rest.push(self.var_term(&other));
        }
        let k = self.rng.random_range(1..=self.shape.max_const.max(1));
        let op = if self.rng.random_bool(0.5) { AddOp::Add } else { AddOp::Sub };
        rest.push((op, Term::Const(k.into())));
        Stmt::Assign(
            target.clone(),
            Expr {
                first: Term::Var(target),
                rest,
            },
        )
    }

    fn stmt(&mut self, depth: usize) -> Stmt {
        let roll: f64 = self.rng.random();
        let s = self.shape;
        if depth > 0 && roll < s.p_loop {
            let v = self.vars[self.rng.random_range(0..self.vars.len())].clone();
            let limit = self.konst();
            let (op, step) = if self.rng.random_bool(0.5) {
                (Op::Lt, AddOp::Add)
            } else {
                (Op::Gt, AddOp::Sub)
            };
            let mut body = vec![Stmt::Assign(
                v.clone(),
                Expr {
                    first: Term::Var(v.clone()),
                    rest: vec![(step, Term::Const(self.rng.random_range(1..=3).into()))],
                },
            )];
            if depth > 1 && self.rng.random_bool(0.5) {
                body.push(self.stmt(depth - 1));
            }
            Stmt::While {
                cond: Cmp {
                    lhs: Expr {
                        first: Term::Var(v),
                        rest: vec![],
                    },
                    op,
                    rhs: Expr::constant(limit),
                },
                bound: self.rng.random_range(1..=s.max_loop_bound.max(1)),
                body,
            }
        } else if depth > 0 && roll < s.p_loop + s.p_branch {
            let cond = self.guard();
            let then = self.block(depth - 1);
            let els = self.rng.random_bool(s.p_else).then(|| self.block(depth - 1));
            Stmt::If { cond, then, els }
        } else if roll < s.p_loop + s.p_branch + s.p_assert {
            Stmt::Assert(self.guard())
        } else {
            self.assign()
        }
    }

    fn block(&mut self, depth: usize) -> Vec<Stmt> {
        let n = self.rng.random_range(1..=self.shape.max_stmts.max(1));
        (0..n).map(|_| self.stmt(depth)).collect()
    }
}

/// `count` seeded random programs named `g<seed>_<i>`; nesting never exceeds
/// `shape.depth`.
pub fn generate_programs(count: usize, seed: u64, shape: &ShapeParams) -> Vec<Program> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut g = Gen {
                rng: ChaCha8Rng::seed_from_u64(master.random()),
                shape,
                vars: Vec::new(),
                last_guard: Vec::new(),
            };
            let lo = shape.min_params.clamp(1, NAMES.len());
            let hi = shape.max_params.clamp(lo, NAMES.len());
            let n = g.rng.random_range(lo..=hi);
            g.vars = NAMES[..n].iter().map(|s| s.to_string()).collect();
            let mut body: Vec<Stmt> = (0..shape.top_stmts.max(1)).map(|_| g.stmt(shape.depth)).collect();
            if g.rng.random_bool(0.5) {
                body.push(Stmt::Halt);
            }
            Program {
                name: format!("g{seed}_{i}"),
                params: g.vars.clone(),
                body,
            }
        })
        .collect()
}

/// A mutable spot in a program, addressed by visiting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Site {
    Relop,
    Constant,
    Arith,
}

/// Visits every guard and assignment, letting `f` rewrite site number
/// `target`. Returns the total number of sites.
fn visit_sites(stmts: &mut [Stmt], counter: &mut usize, f: &mut impl FnMut(usize, Site, &mut Cmp, Option<usize>, Option<usize>)) {
    fn expr_sites(e: &Expr) -> (Vec<usize>, Vec<usize>) {
        let mut consts = Vec::new();
        if let Term::Const(_) = e.first {
            consts.push(0);
        }
        let mut ariths = Vec::new();
        for (i, (_, t)) in e.rest.iter().enumerate() {
            ariths.push(i);
            if let Term::Const(_) = t {
                consts.push(i + 1);
            }
        }
        (consts, ariths)
    }
    for s in stmts {
        let guard = match s {
            Stmt::If { cond, then, els } => {
                visit_sites(then, counter, f);
                if let Some(e) = els {
                    visit_sites(e, counter, f);
                }
                Some(cond)
            }
            Stmt::While { cond, body, .. } => {
                visit_sites(body, counter, f);
                Some(cond)
            }
            Stmt::Assert(c) => Some(c),
            Stmt::Assign(..) | Stmt::Halt => None,
        };
        let Some(cond) = guard else { continue };
        f(*counter, Site::Relop, cond, None, None);
        *counter += 1;
        // Sides are numbered lhs then rhs; constants address term slots.
        for side in 0..2 {
            let e = if side == 0 { &cond.lhs } else { &cond.rhs };
            let (consts, ariths) = expr_sites(e);
            for c in consts {
                f(*counter, Site::Constant, cond, Some(side), Some(c));
                *counter += 1;
            }
            for a in ariths {
                f(*counter, Site::Arith, cond, Some(side), Some(a));
                *counter += 1;
            }
        }
    }
}

fn flip_relop(op: Op, alt: bool) -> Op {
    match (op, alt) {
        (Op::Lt, false) => Op::Leq,
        (Op::Lt, true) => Op::Geq,
        (Op::Leq, false) => Op::Lt,
        (Op::Leq, true) => Op::Gt,
        (Op::Gt, false) => Op::Geq,
        (Op::Gt, true) => Op::Leq,
        (Op::Geq, false) => Op::Gt,
        (Op::Geq, true) => Op::Lt,
        (Op::Eq, _) => Op::Neq,
        (Op::Neq, _) => Op::Eq,
    }
}

/// Applies one seeded mutation to a guard: relational-operator replacement,
/// constant perturbation by ±1..±5, or `+`/`-` flip. The mutant differs from
/// `p` in exactly one syntax node and keeps its parameters.
pub fn mutate_program(p: &Program, seed: u64) -> Result<Program, DatasetError> {
    let mut body = p.body.clone();
    let mut total = 0;
    visit_sites(&mut body, &mut total, &mut |_, _, _, _, _| {});
    if total == 0 {
        return Err(DatasetError::NoMutationSite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(0..total);
    let alt = rng.random_bool(0.5);
    let delta = rng.random_range(1..=5i64) * if rng.random_bool(0.5) { 1 } else { -1 };
    let mut n = 0;
    visit_sites(&mut body, &mut n, &mut |i, site, cond, side, slot| {
        if i != target {
            return;
        }
        let expr = match side {
            Some(0) => &mut cond.lhs,
            _ => &mut cond.rhs,
        };
        match site {
            Site::Relop => cond.op = flip_relop(cond.op, alt),
            Site::Constant => {
                let slot = slot.expect("constant sites carry a slot");
                let t = if slot == 0 { &mut expr.first } else { &mut expr.rest[slot - 1].1 };
                if let Term::Const(k) = t {
                    *k += delta;
                }
            }
            Site::Arith => {
                let op = &mut expr.rest[slot.expect("arith sites carry a slot")].0;
                *op = op.flip();
            }
        }
    });
    Ok(Program {
        name: format!("{}_m{seed}", p.name),
        params: p.params.clone(),
        body,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LabelReport {
    pub programs: usize,
    pub records: usize,
    /// Checks where the solver gave up.
    pub skipped: usize,
    /// Programs cut off by the state budget.
    pub incomplete: usize,
}

/// Runs solver-only symbolic execution on every program and emits one record
/// per non-empty checked PC, in program order then discovery order. Programs
/// run in parallel; output order does not depend on scheduling.
pub fn label_corpus(
    programs: &[Program],
    solver: &Solver,
    max_states: usize,
) -> (Vec<DatasetRecord>, LabelReport) {
    let families: Vec<&[Program]> = programs.chunks(1).collect();
    label_families(&families, solver, max_states)
}

/// As [`label_corpus`], but the programs of one family share an exact
/// verdict cache keyed by canonical PC. Mutants repeat most of their
/// original's PCs, so this skips most solver calls without changing any
/// label: a cached verdict is the solver's verdict on an equisatisfiable PC.
pub fn label_families(
    families: &[&[Program]],
    solver: &Solver,
    max_states: usize,
) -> (Vec<DatasetRecord>, LabelReport) {
    let opts = RunOptions {
        solver: solver.clone(),
        max_states,
        record_checks: true,
    };
    let per_family: Vec<Vec<(Vec<DatasetRecord>, usize, bool)>> = families
        .par_iter()
        .map(|family| {
            let mut cache = SolutionCache::new();
            family
                .iter()
                .map(|p| {
                    let report = if family.len() > 1 {
                        symexec::run(p, &mut Backend::Cache(&mut cache), &opts)
                    } else {
                        symexec::run(p, &mut Backend::SolverOnly, &opts)
                    };
                    let mut skipped = 0;
                    let mut out = Vec::new();
                    for c in &report.checks {
                        if c.pc.is_empty() {
                            continue;
                        }
                        match c.sat {
                            Some(sat) => out.push(DatasetRecord {
                                pc: format_pc(&canonize(&c.pc)),
                                sat,
                                src: p.name.clone(),
                            }),
                            None => skipped += 1,
                        }
                    }
                    (out, skipped, report.complete)
                })
                .collect()
        })
        .collect();
    let mut report = LabelReport::default();
    let mut records = Vec::new();
    for (recs, skipped, complete) in per_family.into_iter().flatten() {
        report.programs += 1;
        report.skipped += skipped;
        report.incomplete += (!complete) as usize;
        records.extend(recs);
    }
    report.records = records.len();
    if report.skipped > 0 {
        log::warn!("{} PCs skipped after the solver gave up", report.skipped);
    }
    (records, report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DedupReport {
    pub kept: usize,
    pub removed: usize,
    /// Matrix-identical records with different labels; both are kept.
    pub conflicts: usize,
    /// Records that do not vectorize at `t_max`; kept as they are.
    pub unvectorized: usize,
}

/// Keeps the first record per matrix key at `t_max`, in stable order.
pub fn dedup(records: &[DatasetRecord], t_max: usize) -> (Vec<DatasetRecord>, DedupReport) {
    let mut seen: HashMap<Vec<u8>, bool> = HashMap::new();
    let mut report = DedupReport::default();
    let mut out = Vec::new();
    for r in records {
        let key = match vectorize(&r.path_condition(), t_max) {
            Ok(m) => matrix_key(&m),
            Err(_) => {
                report.unvectorized += 1;
                out.push(r.clone());
                continue;
            }
        };
        match seen.get(&key) {
            Some(&sat) if sat == r.sat => report.removed += 1,
            Some(_) => {
                log::error!("label conflict on {}", r.pc);
                report.conflicts += 1;
                out.push(r.clone());
            }
            None => {
                seen.insert(key, r.sat);
                out.push(r.clone());
            }
        }
    }
    report.kept = out.len();
    (out, report)
}

/// Per constraint count, downsamples the majority label so that neither
/// label exceeds `max_share` of the group. Order of survivors is kept.
pub fn balance(records: &[DatasetRecord], max_share: f64, seed: u64) -> Vec<DatasetRecord> {
    let mut counts: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        counts.entry((r.d(), r.sat)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop = HashSet::new();
    let ds: BTreeSet<usize> = counts.keys().map(|k| k.0).collect();
    for d in ds {
        let sat = counts.get(&(d, true)).map_or(0, Vec::len);
        let unsat = counts.get(&(d, false)).map_or(0, Vec::len);
        if sat == 0 || unsat == 0 {
            continue;
        }
        let (major, minor) = if sat > unsat { (true, unsat) } else { (false, sat) };
        // major / (major + minor) <= max_share
        let cap = ((max_share * minor as f64) / (1.0 - max_share) + 1e-9).floor() as usize;
        let idx = counts.get_mut(&(d, major)).expect("group has both labels");
        if idx.len() > cap {
            idx.shuffle(&mut rng);
            drop.extend(idx[cap..].iter().copied());
        }
    }
    records
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, r)| r.clone())
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GroupCounts {
    pub total: usize,
    pub sat: usize,
    pub unsat: usize,
}

impl GroupCounts {
    pub fn sat_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.sat as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub total: usize,
    pub per_d: BTreeMap<usize, GroupCounts>,
    /// Records by number of distinct variables.
    pub var_histogram: BTreeMap<usize, usize>,
    /// Groups holding a single label; a bank cannot be trained on them.
    pub single_label_groups: Vec<usize>,
}

pub fn stats(records: &[DatasetRecord]) -> StatsReport {
    let mut s = StatsReport {
        total: records.len(),
        ..StatsReport::default()
    };
    for r in records {
        let g = s.per_d.entry(r.d()).or_default();
        g.total += 1;
        if r.sat {
            g.sat += 1;
        } else {
            g.unsat += 1;
        }
        *s.var_histogram.entry(r.path_condition().vars().len()).or_default() += 1;
    }
    for (d, g) in &s.per_d {
        if g.sat == 0 || g.unsat == 0 {
            log::warn!("group d = {d} holds a single label and is excluded from training");
            s.single_label_groups.push(*d);
        }
    }
    s
}

/// Seeded shuffle, then the first `fraction` of records become the training
/// split. Stats cover the whole input.
pub fn split_and_stats(
    records: &[DatasetRecord],
    seed: u64,
    fraction: f64,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>, StatsReport), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (fraction * records.len() as f64).round() as usize;
    let test = shuffled.split_off(cut);
    Ok((shuffled, test, stats(records)))
}

/// JSON Lines `{"pc", "sat", "src"}`.
pub fn write_jsonl(records: &[DatasetRecord], out: &mut impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(records: &[DatasetRecord], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(records, &mut out)?;
    out.flush()
}

/// Reads records, rejecting lines whose PC text is not canonical.
pub fn load_jsonl(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| DatasetError::Format { line: i + 1, msg };
        let r: DatasetRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let pc = parse_pc(&r.pc).map_err(|e| bad(e.to_string()))?;
        if format_pc(&canonize(&pc)) != r.pc {
            return Err(bad(format!("not canonical: {}", r.pc)));
        }
        records.push(r);
    }
    Ok(records)
}

/// Everything `build_corpus` needs; serializes as the `gen-data` config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub programs: usize,
    pub mutants: usize,
    pub seed: u64,
    pub shape: ShapeParams,
    pub t_max: usize,
    pub d_min: usize,
    pub d_max: usize,
    /// Upper bound on either label's share within a group.
    pub max_label_share: f64,
    pub max_states: usize,
    pub node_budget: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            programs: 5,
            mutants: 3_000,
            seed: 8,
            shape: ShapeParams::default(),
            t_max: 6,
            d_min: 2,
            d_max: 10,
            max_label_share: 0.8,
            max_states: 5_000,
            node_budget: crate::solver::DEFAULT_NODE_BUDGET,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusReport {
    pub programs: usize,
    pub mutants: usize,
    pub label: LabelReport,
    /// Records left after dropping exact repeats of text and label.
    pub distinct: usize,
    pub in_range: usize,
    pub dedup: DedupReport,
    pub balanced: usize,
    pub stats: StatsReport,
}

const FAMILY_BLOCK: usize = 128;

/// Generates programs and mutants, labels them, keeps PCs with
/// `d_min <= d <= d_max` and at most `t_max` variables, dedups and balances.
pub fn build_corpus(cfg: &CorpusConfig) -> (Vec<DatasetRecord>, CorpusReport) {
    let originals = generate_programs(cfg.programs, cfg.seed, &cfg.shape);
    let mut family_members = Vec::with_capacity(originals.len());
    let mut mutants = 0;
    for (i, p) in originals.iter().enumerate() {
        let mut members = vec![p.clone()];
        for m in 0..cfg.mutants {
            if let Ok(q) = mutate_program(p, (i * cfg.mutants + m) as u64) {
                members.push(q);
                mutants += 1;
            }
        }
        family_members.push(members);
    }
    // Blocks of one family share a cache; several blocks per family keep
    // workers busy when there are few originals.
    let families: Vec<&[Program]> = family_members
        .iter()
        .flat_map(|members| members.chunks(FAMILY_BLOCK))
        .collect();
    let solver = Solver::new(cfg.node_budget);
    let (labeled, label) = label_families(&families, &solver, cfg.max_states);
    // Identical text and label always share a matrix key, so dropping repeats
    // here leaves the dedup output unchanged and saves reparsing them.
    let mut seen = HashSet::new();
    let distinct: Vec<DatasetRecord> = labeled
        .into_iter()
        .filter(|r| seen.insert((r.pc.clone(), r.sat)))
        .collect();
    let n_distinct = distinct.len();
    let in_range: Vec<DatasetRecord> = distinct
        .into_iter()
        .filter(|r| {
            let d = r.d();
            d >= cfg.d_min && d <= cfg.d_max && r.path_condition().vars().len() <= cfg.t_max
        })
        .collect();
    let n_in_range = in_range.len();
    let (unique, dedup_report) = dedup(&in_range, cfg.t_max);
    let balanced = balance(&unique, cfg.max_label_share, cfg.seed);
    let report = CorpusReport {
        programs: originals.len(),
        mutants,
        label,
        distinct: n_distinct,
        in_range: n_in_range,
        dedup: dedup_report,
        balanced: balanced.len(),
        stats: stats(&balanced),
    };
    (balanced, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{brute_force_solve, solve, Verdict};
    use crate::symexec::parse_program;
    use rand::seq::IndexedRandom;

    const TWO_INPUTS: &str = "
        fn example(x, y) {
            if (x > y) {
                if (y > 0) { x := y + x; } else { x := y - x; }
            } else {
                if (x > 0) { y := x + y; } else { y := x - y; }
            }
        }";

    fn rec(pc: &str, sat: bool) -> DatasetRecord {
        DatasetRecord {
            pc: format_pc(&canonize(&parse_pc(pc).unwrap())),
            sat,
            src: "t".into(),
        }
    }

    #[test]
    fn generator_is_seeded_and_depth_bounded() {
        let shape = ShapeParams::default();
        let a = generate_programs(3, 1, &shape);
        assert_eq!(a, generate_programs(3, 1, &shape));
        assert_ne!(a, generate_programs(3, 2, &shape));
        for depth in 0..5 {
            let shape = ShapeParams { depth, ..ShapeParams::default() };
            for p in generate_programs(30, 9, &shape) {
                assert!(p.max_depth() <= depth);
                let back = parse_program(&p.to_string()).unwrap();
                assert_eq!(back, p);
            }
        }
    }

    #[test]
    fn mutants_change_one_node() {
        let p = parse_program("fn f(x, y) { if (x > y) { halt; } }").unwrap();
        let mut seen = HashSet::new();
        for seed in 0..40 {
            let m = mutate_program(&p, seed).unwrap();
            let Stmt::If { cond, .. } = &m.body[0] else { unreachable!() };
            seen.insert(cond.op);
            assert_eq!(parse_program(&m.to_string()).unwrap().body, m.body);
        }
        assert!(seen.contains(&Op::Geq));
        let none = parse_program("fn f(x) { x := x + 1; halt; }").unwrap();
        assert!(matches!(mutate_program(&none, 0), Err(DatasetError::NoMutationSite)));
    }

    #[test]
    fn mutant_site_kinds() {
        let p = parse_program("fn f(x, y) { if (x - y <= 4) { halt; } }").unwrap();
        let mut kinds = HashSet::new();
        for seed in 0..60 {
            let m = mutate_program(&p, seed).unwrap();
            let Stmt::If { cond, .. } = &m.body[0] else { unreachable!() };
            let Stmt::If { cond: orig, .. } = &p.body[0] else { unreachable!() };
            let diffs = (cond.op != orig.op) as usize
                + (cond.lhs.rest != orig.lhs.rest) as usize
                + (cond.rhs != orig.rhs) as usize;
            assert_eq!(diffs, 1, "{m}");
            kinds.insert(if cond.op != orig.op { 0 } else if cond.rhs != orig.rhs { 1 } else { 2 });
        }
        assert_eq!(kinds.len(), 3);
    }

    #[test]
    fn example_program_labels() {
        let p = parse_program(TWO_INPUTS).unwrap();
        let (recs, report) = label_corpus(&[p], &Solver::default(), 1000);
        assert_eq!(recs.len(), 6);
        assert!(recs.iter().all(|r| r.sat));
        assert_eq!(report.skipped, 0);
        let q = parse_program("fn f(x) { if (x > 0) { if (x < 0) { halt; } } }").unwrap();
        let (recs, _) = label_corpus(&[q], &Solver::default(), 1000);
        assert!(recs.iter().any(|r| !r.sat));
    }

    #[test]
    fn labels_match_brute_force() {
        let shape = ShapeParams { max_const: 6, ..ShapeParams::default() };
        let programs = generate_programs(20, 3, &shape);
        let (recs, _) = label_corpus(&programs, &Solver::default(), 2000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sample: Vec<_> = recs.choose_multiple(&mut rng, 100).collect();
        assert_eq!(sample.len(), 100);
        for r in sample {
            let pc = r.path_condition();
            match solve(&pc).unwrap() {
                Verdict::Sat(m) => {
                    assert!(r.sat, "{}", r.pc);
                    assert!(pc.holds(&m));
                }
                Verdict::Unsat => {
                    assert!(!r.sat, "{}", r.pc);
                    assert_eq!(brute_force_solve(&pc, 20).unwrap(), Verdict::Unsat, "{}", r.pc);
                }
            }
        }
    }

    #[test]
    fn reassociated_pair_collapses() {
        let a = rec("x + (y + z) <= 3", true);
        let b = rec("(x + y) + z <= 3", true);
        let (out, report) = dedup(&[a.clone(), b], 3);
        assert_eq!(out, vec![a]);
        assert_eq!(report.removed, 1);
    }

    #[test]
    fn dedup_is_stable_and_idempotent() {
        let rs = vec![rec("x > 1", true), rec("y > 1", true), rec("x > 2", true), rec("x > 0 && x < 0", false)];
        let (once, r1) = dedup(&rs, 4);
        assert_eq!(once, vec![rs[0].clone(), rs[2].clone(), rs[3].clone()]);
        assert_eq!(r1.removed, 1);
        let (twice, r2) = dedup(&once, 4);
        assert_eq!(twice, once);
        assert_eq!(r2.removed, 0);
    }

    #[test]
    fn dedup_keeps_label_conflicts() {
        let a = rec("x > 1", true);
        let b = DatasetRecord { sat: false, ..a.clone() };
        let (out, report) = dedup(&[a, b], 2);
        assert_eq!(out.len(), 2);
        assert_eq!(report.conflicts, 1);
    }

    #[test]
    fn balance_caps_the_majority() {
        let mut rs = Vec::new();
        for k in 0..90 {
            rs.push(rec(&format!("x > {k} && y > 0"), true));
        }
        for k in 0..10 {
            rs.push(rec(&format!("x > {k} && x < 0"), false));
        }
        let before = stats(&rs);
        let out = balance(&rs, 0.8, 1);
        let s = stats(&out);
        for (d, g) in &s.per_d {
            let b = &before.per_d[d];
            if b.sat > 0 && b.unsat > 0 {
                let minor = b.sat.min(b.unsat);
                assert_eq!(g.sat.min(g.unsat), minor);
                assert_eq!(g.sat.max(g.unsat), b.sat.max(b.unsat).min(4 * minor));
            } else {
                assert_eq!(g, b);
            }
        }
        assert!(s.per_d.values().any(|g| g.sat == 4 * g.unsat && g.unsat > 0));
        assert_eq!(out, balance(&rs, 0.8, 1));
    }

    #[test]
    fn split_sizes_and_stats() {
        let rs: Vec<_> = (0..100).map(|k| rec(&format!("x + y > {k}"), k % 3 == 0)).collect();
        let (train, test, s) = split_and_stats(&rs, 4, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(s.per_d.values().map(|g| g.total).sum::<usize>(), 100);
        assert_eq!(s.var_histogram[&2], 100);
        assert!(split_and_stats(&rs, 4, 1.0).is_err());
        let (t2, _, _) = split_and_stats(&rs, 4, 0.8).unwrap();
        assert_eq!(train, t2);
    }

    #[test]
    fn jsonl_round_trip() {
        let rs = vec![rec("x > 1", true), rec("x > 0 && x < 0", false)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_jsonl(&rs, &path).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), rs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"pc\":"));
        std::fs::write(&path, "{\"pc\":\"y > 1\",\"sat\":true,\"src\":\"t\"}\n").unwrap();
        assert!(matches!(load_jsonl(&path), Err(DatasetError::Format { line: 1, .. })));
    }
}
