//! Canonization: operator rewriting, coefficient normalization, constraint
//! ordering and variable renaming.
//!
//! The output of [`canonize`] depends only on the path condition up to a
//! consistent renaming of its variables. Variables are first put in a
//! label-independent order by colour refinement over the constraint/variable
//! incidence structure; constraints are then sorted by their printed form under
//! that order and variables renamed `v0, v1, ...` by first appearance. When
//! refinement leaves variables tied, every ordering of the tied classes is
//! tried and the smallest printed result wins.

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use super::{LinExpr, LinearConstraint, Op, PathCondition};

/// Upper bound on the number of tie-breaking orderings tried per path
/// condition. Beyond it tied variables keep their incoming relative order.
const MAX_TIE_ORDERINGS: usize = 720;

/// A single constraint after operator rewriting and gcd normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Normalized {
    /// The constraint mentions no variable; it is identically true or false.
    Constant(bool),
    Constraint(LinearConstraint),
}

/// Rewrites one constraint into `sum c_i v_i + k op 0` with `op` in
/// `{==, !=, <=}` and divides out common factors.
///
/// Strict and `>=` forms use integer tightening: `e < 0` becomes `e + 1 <= 0`,
/// `e > 0` becomes `-e + 1 <= 0` and `e >= 0` becomes `-e <= 0`. Equalities
/// and disequalities are divided by the gcd of all coefficients and the
/// constant; inequalities by the gcd of the coefficients with the constant
/// rounded up, which keeps the integer solution set unchanged.
pub fn normalize_constraint(c: &LinearConstraint) -> Normalized {
    let one = LinExpr::from_constant(BigInt::one());
    let (expr, op) = match c.op() {
        Op::Lt => (c.expr().add(&one), Op::Leq),
        Op::Gt => (c.expr().neg().add(&one), Op::Leq),
        Op::Geq => (c.expr().neg(), Op::Leq),
        op => (c.expr().clone(), op),
    };
    if expr.is_constant() {
        return Normalized::Constant(op.holds(expr.constant()));
    }
    let coeff_gcd = expr
        .coeffs()
        .values()
        .fold(BigInt::zero(), |g, c| g.gcd(c));
    let (g, k) = match op {
        Op::Leq => (coeff_gcd.clone(), expr.constant().div_ceil(&coeff_gcd)),
        _ => {
            let g = coeff_gcd.gcd(expr.constant());
            (g.clone(), expr.constant() / &g)
        }
    };
    let coeffs = expr.coeffs().iter().map(|(&v, c)| (v, c / &g));
    Normalized::Constraint(LinearConstraint::new(LinExpr::from_parts(coeffs, k), op))
}

fn constant_constraint(k: i64, op: Op) -> LinearConstraint {
    LinearConstraint::new(LinExpr::from_constant(k), op)
}

/// Puts a path condition into canonical form.
///
/// The result is equisatisfiable with the input, idempotent under a second
/// application, and identical for inputs that differ only by a consistent
/// variable renaming. A constant-false constraint collapses the whole
/// condition to `1 <= 0`; an empty result is `0 == 0`.
pub fn canonize(pc: &PathCondition) -> PathCondition {
    let labelled = match small_locals(pc) {
        Some(Ok(locals)) => locals.map(label),
        Some(Err(())) => return PathCondition::new_canonical(vec![constant_constraint(1, Op::Leq)]),
        None => match big_locals(pc) {
            Ok(locals) => locals.map(label),
            Err(()) => return PathCondition::new_canonical(vec![constant_constraint(1, Op::Leq)]),
        },
    };
    PathCondition::new_canonical(
        labelled.unwrap_or_else(|| vec![constant_constraint(0, Op::Eq)]),
    )
}

/// Normalized constraint. Before labelling `terms` are keyed by the incoming
/// variable ids; inside [`label`] by dense local ids. Terms are sorted by
/// variable and carry no zero coefficient.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Local<T> {
    op: Op,
    constant: T,
    terms: Vec<(usize, T)>,
}

impl<T: Into<BigInt>> Local<T> {
    fn into_constraint(self) -> LinearConstraint {
        let expr = LinExpr::from_parts(self.terms.into_iter().map(|(v, k)| (v, k.into())), self.constant.into());
        LinearConstraint::new(expr, self.op)
    }
}

/// `Err` for a constant-false constraint, `Ok(None)` when every constraint is
/// constant-true.
type Collected<T> = Result<Option<Vec<Local<T>>>, ()>;

fn sorted_unique<T: Ord>(mut locals: Vec<Local<T>>) -> Option<Vec<Local<T>>> {
    locals.sort();
    locals.dedup();
    (!locals.is_empty()).then_some(locals)
}

fn big_locals(pc: &PathCondition) -> Collected<BigInt> {
    let mut locals = Vec::with_capacity(pc.len());
    for c in pc.constraints() {
        match normalize_constraint(c) {
            Normalized::Constant(true) => {}
            Normalized::Constant(false) => return Err(()),
            Normalized::Constraint(c) => locals.push(Local {
                op: c.op(),
                constant: c.constant().clone(),
                terms: c.coeffs().iter().map(|(&v, k)| (v, k.clone())).collect(),
            }),
        }
    }
    Ok(sorted_unique(locals))
}

/// Magnitude bound for the machine-integer path. Rewriting negates and adds
/// one, so every intermediate stays well inside `i64`.
const SMALL: i64 = 1 << 61;

fn small(x: &BigInt) -> Option<i64> {
    i64::try_from(x).ok().filter(|x| x.abs() < SMALL)
}

/// [`normalize_constraint`] on machine integers; `None` when a coefficient or
/// constant is out of range.
fn normalize_small(c: &LinearConstraint) -> Option<Result<Option<Local<i64>>, ()>> {
    let k = small(c.constant())?;
    let mut terms = Vec::with_capacity(c.coeffs().len());
    for (&v, x) in c.coeffs() {
        terms.push((v, small(x)?));
    }
    let (sign, k, op) = match c.op() {
        Op::Lt => (1, k + 1, Op::Leq),
        Op::Gt => (-1, 1 - k, Op::Leq),
        Op::Geq => (-1, -k, Op::Leq),
        op => (1, k, op),
    };
    if terms.is_empty() {
        return Some(if op.holds(&BigInt::from(k)) { Ok(None) } else { Err(()) });
    }
    let coeff_gcd = terms.iter().fold(0i64, |g, (_, x)| g.gcd(x));
    let (g, k) = match op {
        Op::Leq => (coeff_gcd, Integer::div_ceil(&k, &coeff_gcd)),
        _ => {
            let g = coeff_gcd.gcd(&k);
            (g, k / g)
        }
    };
    for t in &mut terms {
        t.1 = sign * t.1 / g;
    }
    Some(Ok(Some(Local { op, constant: k, terms })))
}

/// `None` when some constraint needs big integers.
fn small_locals(pc: &PathCondition) -> Option<Collected<i64>> {
    let mut locals = Vec::with_capacity(pc.len());
    let mut found_false = false;
    for c in pc.constraints() {
        match normalize_small(c)? {
            Ok(l) => locals.extend(l),
            Err(()) => found_false = true,
        }
    }
    Some(if found_false { Err(()) } else { Ok(sorted_unique(locals)) })
}

fn ranks<T: Ord>(items: &[T]) -> Vec<usize> {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort();
    sorted.dedup();
    items
        .iter()
        .map(|x| sorted.binary_search(&x).expect("item is present"))
        .collect()
}

fn distinct(colors: &[usize]) -> usize {
    colors.iter().copied().max().map_or(0, |m| m + 1)
}

/// Colour refinement of the variables. Colours are ranks of signatures built
/// only from coefficients, constants, operators and earlier colours, so they
/// do not depend on the incoming variable numbering.
fn refine<T: Ord>(locals: &[Local<T>], nvars: usize) -> Vec<usize> {
    let descriptors: Vec<(Op, &T, Vec<&T>)> = locals
        .iter()
        .map(|c| {
            let mut cs: Vec<&T> = c.terms.iter().map(|(_, k)| k).collect();
            cs.sort();
            (c.op, &c.constant, cs)
        })
        .collect();
    let desc_rank = ranks(&descriptors);

    let mut occurrences: Vec<Vec<(usize, &T)>> = vec![Vec::new(); nvars];
    for (ci, c) in locals.iter().enumerate() {
        for (v, k) in &c.terms {
            occurrences[*v].push((ci, k));
        }
    }

    let mut colors = vec![0usize; nvars];
    for _ in 0..=nvars {
        let csigs: Vec<(usize, Vec<(usize, &T)>)> = locals
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let mut s: Vec<(usize, &T)> = c.terms.iter().map(|(v, k)| (colors[*v], k)).collect();
                s.sort();
                (desc_rank[ci], s)
            })
            .collect();
        let ccolors = ranks(&csigs);
        let vsigs: Vec<(usize, Vec<(usize, &T)>)> = (0..nvars)
            .map(|v| {
                let mut s: Vec<(usize, &T)> = occurrences[v].iter().map(|(ci, k)| (ccolors[*ci], *k)).collect();
                s.sort();
                (colors[v], s)
            })
            .collect();
        let next = ranks(&vsigs);
        // Once every variable has its own colour the next round reproduces it.
        let stable = distinct(&next) == distinct(&colors) || distinct(&next) == nvars;
        colors = next;
        if stable {
            break;
        }
    }
    colors
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    (1..=n).fold(1usize, |acc, k| acc.saturating_mul(k).min(cap + 1))
}

/// Candidate variable orders (lists of local ids, lowest label first).
fn candidate_orders(colors: &[usize]) -> Vec<Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &c) in colors.iter().enumerate() {
        classes.entry(c).or_default().push(v);
    }
    let total = classes.values().fold(1usize, |acc, cls| {
        acc.saturating_mul(factorial_capped(cls.len(), MAX_TIE_ORDERINGS))
    });
    if total > MAX_TIE_ORDERINGS {
        return vec![classes.into_values().flatten().collect()];
    }
    let mut orders: Vec<Vec<usize>> = vec![Vec::new()];
    for cls in classes.values() {
        let perms = permutations(cls);
        orders = orders
            .iter()
            .flat_map(|prefix| {
                perms.iter().map(move |p| {
                    let mut o = prefix.clone();
                    o.extend_from_slice(p);
                    o
                })
            })
            .collect();
    }
    orders
}

/// Appends the printed form of a constraint, exactly as `Display` renders
/// the corresponding [`LinearConstraint`].
fn print<T: fmt::Display>(out: &mut String, c: &Local<T>) {
    for (v, k) in &c.terms {
        let _ = write!(out, "{k}*v{v} + ");
    }
    let _ = write!(out, "{} {} 0", c.constant, c.op);
}

fn relabel<T: Clone>(c: &Local<T>, map: impl Fn(usize) -> usize) -> Local<T> {
    let mut terms: Vec<(usize, T)> = c.terms.iter().map(|(v, k)| (map(*v), k.clone())).collect();
    terms.sort_by_key(|t| t.0);
    Local {
        op: c.op,
        constant: c.constant.clone(),
        terms,
    }
}

/// Sort by printed form under the given labels, then rename by first appearance.
/// The printed renamed form, used to compare candidate orders, is only built
/// when `with_key` is set.
fn sort_and_rename<T: Clone + fmt::Display>(
    locals: &[Local<T>],
    label_of: &[usize],
    with_key: bool,
) -> (Vec<Local<T>>, String) {
    let mut labelled: Vec<(String, Local<T>)> = locals
        .iter()
        .map(|c| {
            let lc = relabel(c, |v| label_of[v]);
            let mut s = String::new();
            print(&mut s, &lc);
            (s, lc)
        })
        .collect();
    labelled.sort_by(|a, b| a.0.cmp(&b.0));
    labelled.dedup_by(|a, b| a.0 == b.0);

    let mut rename = vec![usize::MAX; label_of.len()];
    let mut next = 0;
    for (_, c) in &labelled {
        for (v, _) in &c.terms {
            if rename[*v] == usize::MAX {
                rename[*v] = next;
                next += 1;
            }
        }
    }
    let renamed: Vec<Local<T>> = labelled.iter().map(|(_, c)| relabel(c, |v| rename[v])).collect();
    let mut key = String::new();
    if with_key {
        // Constraint strings never contain '\n', so comparing the joined key
        // orders candidates as comparing the string lists would.
        for c in &renamed {
            print(&mut key, c);
            key.push('\n');
        }
    }
    (renamed, key)
}

fn label<T: Ord + Clone + fmt::Display + Into<BigInt>>(normal: Vec<Local<T>>) -> Vec<LinearConstraint> {
    // Local ids follow the incoming numbering only to make tie handling
    // deterministic when the tie limit is exceeded.
    let mut vars: Vec<usize> = normal.iter().flat_map(|c| c.terms.iter().map(|t| t.0)).collect();
    vars.sort_unstable();
    vars.dedup();
    let locals: Vec<Local<T>> = normal
        .iter()
        .map(|c| relabel(c, |v| vars.binary_search(&v).expect("variable is indexed")))
        .collect();
    let nvars = vars.len();
    let colors = refine(&locals, nvars);

    let orders = candidate_orders(&colors);
    let with_key = orders.len() > 1;
    let mut best: Option<(String, Vec<Local<T>>)> = None;
    for order in orders {
        let mut label_of = vec![0usize; nvars];
        for (pos, &v) in order.iter().enumerate() {
            label_of[v] = pos;
        }
        let (constraints, key) = sort_and_rename(&locals, &label_of, with_key);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, constraints));
        }
    }
    best.expect("at least one candidate order")
        .1
        .into_iter()
        .map(Local::into_constraint)
        .collect()
}
