//! Linear integer path conditions: domain types, text form and canonization.
//!
//! A [`PathCondition`] is a conjunction of [`LinearConstraint`]s, each of the
//! form `c0*v0 + c1*v1 + ... + k op 0`. Coefficients are arbitrary-precision
//! integers; range limits are only imposed later by the vectorizer.

mod canon;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use canon::{canonize, normalize_constraint, Normalized};
pub use parse::{parse_pc, parse_pc_named};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("nonlinear term at byte {pos}: {msg}")]
    Nonlinear { pos: usize, msg: String },
}

/// Relational operator of a constraint `expr op 0`.
///
/// `Eq`, `Neq` and `Leq` are the canonical forms; the others only come out of
/// the parser and are rewritten away by [`canonize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Eq,
    Neq,
    Leq,
    Lt,
    Gt,
    Geq,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Neq => "!=",
            Op::Leq => "<=",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Geq => ">=",
        }
    }

    pub fn is_canonical(self) -> bool {
        matches!(self, Op::Eq | Op::Neq | Op::Leq)
    }

    /// Matrix encoding of a canonical operator: 0 for `=`, 1 for `!=`, 2 for `<=`.
    pub fn code(self) -> Option<i64> {
        match self {
            Op::Eq => Some(0),
            Op::Neq => Some(1),
            Op::Leq => Some(2),
            _ => None,
        }
    }

    pub fn from_code(code: i64) -> Option<Op> {
        match code {
            0 => Some(Op::Eq),
            1 => Some(Op::Neq),
            2 => Some(Op::Leq),
            _ => None,
        }
    }

    /// The operator of the logical negation: `!(e op 0)` is `e op.negate() 0`.
    pub fn negate(self) -> Op {
        match self {
            Op::Eq => Op::Neq,
            Op::Neq => Op::Eq,
            Op::Leq => Op::Gt,
            Op::Gt => Op::Leq,
            Op::Lt => Op::Geq,
            Op::Geq => Op::Lt,
        }
    }

    /// Whether `value op 0` holds.
    pub fn holds(self, value: &BigInt) -> bool {
        match self {
            Op::Eq => value.is_zero(),
            Op::Neq => !value.is_zero(),
            Op::Leq => !value.is_positive(),
            Op::Lt => value.is_negative(),
            Op::Gt => value.is_positive(),
            Op::Geq => !value.is_negative(),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `sum coeffs[i] * v_i + constant`. Zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinExpr {
    coeffs: BTreeMap<usize, BigInt>,
    constant: BigInt,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_constant(k: impl Into<BigInt>) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: k.into(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(1, index)
    }

    pub fn term(coeff: impl Into<BigInt>, index: usize) -> Self {
        let mut e = Self::zero();
        e.add_term(index, coeff.into());
        e
    }

    pub fn from_parts(coeffs: impl IntoIterator<Item = (usize, BigInt)>, constant: BigInt) -> Self {
        let mut e = Self::from_constant(constant);
        for (v, c) in coeffs {
            e.add_term(v, c);
        }
        e
    }

    pub fn coeffs(&self) -> &BTreeMap<usize, BigInt> {
        &self.coeffs
    }

    pub fn constant(&self) -> &BigInt {
        &self.constant
    }

    pub fn coeff(&self, var: usize) -> BigInt {
        self.coeffs.get(&var).cloned().unwrap_or_default()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_term(&mut self, var: usize, coeff: BigInt) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(var).or_default();
        *slot += coeff;
        if slot.is_zero() {
            self.coeffs.remove(&var);
        }
    }

    pub fn add_constant(&mut self, k: &BigInt) {
        self.constant += k;
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (&v, c) in &other.coeffs {
            out.add_term(v, c.clone());
        }
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, factor: &BigInt) -> LinExpr {
        if factor.is_zero() {
            return LinExpr::zero();
        }
        LinExpr {
            coeffs: self.coeffs.iter().map(|(&v, c)| (v, c * factor)).collect(),
            constant: &self.constant * factor,
        }
    }

    pub fn neg(&self) -> LinExpr {
        self.scale(&-BigInt::one())
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.neg())
    }

    /// Replaces every variable by another linear expression.
    pub fn substitute(&self, subst: impl Fn(usize) -> LinExpr) -> LinExpr {
        let mut out = LinExpr::from_constant(self.constant.clone());
        for (&v, c) in &self.coeffs {
            out = out.add(&subst(v).scale(c));
        }
        out
    }

    pub fn rename(&self, map: impl Fn(usize) -> usize) -> LinExpr {
        LinExpr::from_parts(
            self.coeffs.iter().map(|(&v, c)| (map(v), c.clone())),
            self.constant.clone(),
        )
    }

    /// Evaluates under `model`; unassigned variables read as zero.
    pub fn eval(&self, model: &BTreeMap<usize, BigInt>) -> BigInt {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            if let Some(x) = model.get(v) {
                acc += c * x;
            }
        }
        acc
    }
}

/// Machine-word values skip BigInt's radix conversion; canonization prints
/// every candidate ordering, so this is hot.
fn write_int(f: &mut fmt::Formatter<'_>, c: &BigInt) -> fmt::Result {
    match i64::try_from(c) {
        Ok(x) => write!(f, "{x}"),
        Err(_) => write!(f, "{c}"),
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (v, c) in &self.coeffs {
            write_int(f, c)?;
            write!(f, "*v{v} + ")?;
        }
        write_int(f, &self.constant)
    }
}

/// `expr op 0` over the integers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearConstraint {
    expr: LinExpr,
    op: Op,
}

impl LinearConstraint {
    pub fn new(expr: LinExpr, op: Op) -> Self {
        LinearConstraint { expr, op }
    }

    /// `lhs op rhs`, moved to the form `lhs - rhs op 0`.
    pub fn compare(lhs: &LinExpr, op: Op, rhs: &LinExpr) -> Self {
        LinearConstraint::new(lhs.sub(rhs), op)
    }

    pub fn expr(&self) -> &LinExpr {
        &self.expr
    }

    pub fn coeffs(&self) -> &BTreeMap<usize, BigInt> {
        self.expr.coeffs()
    }

    pub fn constant(&self) -> &BigInt {
        self.expr.constant()
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn negate(&self) -> LinearConstraint {
        LinearConstraint::new(self.expr.clone(), self.op.negate())
    }

    pub fn holds(&self, model: &BTreeMap<usize, BigInt>) -> bool {
        self.op.holds(&self.expr.eval(model))
    }

    pub fn rename(&self, map: impl Fn(usize) -> usize) -> LinearConstraint {
        LinearConstraint::new(self.expr.rename(map), self.op)
    }
}

impl fmt::Display for LinearConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} 0", self.expr, self.op)
    }
}

/// A conjunction of linear constraints. The empty conjunction is `True`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PathCondition {
    constraints: Vec<LinearConstraint>,
    canonical: bool,
}

impl PathCondition {
    pub fn new(constraints: Vec<LinearConstraint>) -> Self {
        PathCondition {
            constraints,
            canonical: false,
        }
    }

    pub(crate) fn new_canonical(constraints: Vec<LinearConstraint>) -> Self {
        PathCondition {
            constraints,
            canonical: true,
        }
    }

    /// The empty conjunction.
    pub fn truth() -> Self {
        Self::default()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn into_constraints(self) -> Vec<LinearConstraint> {
        self.constraints
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `self && c`; the result is never flagged canonical.
    pub fn and(&self, c: LinearConstraint) -> PathCondition {
        let mut constraints = self.constraints.clone();
        constraints.push(c);
        PathCondition::new(constraints)
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        self.constraints
            .iter()
            .flat_map(|c| c.coeffs().keys().copied())
            .collect()
    }

    pub fn holds(&self, model: &BTreeMap<usize, BigInt>) -> bool {
        self.constraints.iter().all(|c| c.holds(model))
    }

    pub fn dimension(&self) -> PcDimension {
        dimension_of(self)
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_pc(self))
    }
}

/// `(d, n, t)`: constraint count, highest term degree, variable count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PcDimension {
    pub d: usize,
    pub n: usize,
    pub t: usize,
}

impl PcDimension {
    pub fn is_linear(&self) -> bool {
        self.n <= 1
    }
}

pub fn dimension_of(pc: &PathCondition) -> PcDimension {
    let t = pc.vars().len();
    PcDimension {
        d: pc.len(),
        n: usize::from(t > 0),
        t,
    }
}

/// Serializes a path condition in the grammar accepted by [`parse_pc`].
///
/// Terms are printed as `c*vI` in increasing variable order, followed by the
/// constant and the operator, e.g. `1*v0 + -1*v1 + 0 == 0`; constraints are
/// joined with ` && `. The empty conjunction prints as `0 == 0`.
pub fn format_pc(pc: &PathCondition) -> String {
    if pc.is_empty() {
        return "0 == 0".to_string();
    }
    let parts: Vec<String> = pc.constraints.iter().map(|c| c.to_string()).collect();
    parts.join(" && ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_simple_equality() {
        let c = LinearConstraint::new(
            LinExpr::from_parts([(0, BigInt::from(1)), (1, BigInt::from(-1))], BigInt::zero()),
            Op::Eq,
        );
        let pc = PathCondition::new(vec![c]);
        assert_eq!(format_pc(&pc), "1*v0 + -1*v1 + 0 == 0");
    }

    #[test]
    fn dimension_examples() {
        let pc = parse_pc("x + y - z + 1 <= 0 && x - z == 0 && -1*x + y - 9 <= 0").unwrap();
        assert_eq!(dimension_of(&pc), PcDimension { d: 3, n: 1, t: 3 });
        let pc = parse_pc("v0 == 0").unwrap();
        assert_eq!(dimension_of(&pc), PcDimension { d: 1, n: 1, t: 1 });
        let pc = parse_pc("5 == 5").unwrap();
        assert_eq!(dimension_of(&pc), PcDimension { d: 1, n: 0, t: 0 });
    }

    #[test]
    fn negation_is_complement() {
        for op in [Op::Eq, Op::Neq, Op::Leq, Op::Lt, Op::Gt, Op::Geq] {
            assert_eq!(op.negate().negate(), op);
            for v in -3..=3 {
                let v = BigInt::from(v);
                assert_ne!(op.holds(&v), op.negate().holds(&v), "{op} at {v}");
            }
        }
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let mut e = LinExpr::var(2);
        e.add_term(2, BigInt::from(-1));
        assert!(e.is_constant());
        assert_eq!(e, LinExpr::zero());
    }
}
