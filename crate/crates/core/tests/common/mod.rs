#![allow(dead_code)]

use num_bigint::BigInt;
use pcsat::{LinExpr, LinearConstraint, Op, PathCondition};
use proptest::prelude::*;
use rand::Rng;

pub const ALL_OPS: [Op; 6] = [Op::Eq, Op::Neq, Op::Leq, Op::Lt, Op::Gt, Op::Geq];

/// `d` constraints over `v0..v{t-1}`, coefficients and constants in
/// `[-c, c]`. Each variable appears in a constraint with probability 3/4.
pub fn random_pc(rng: &mut impl Rng, t: usize, d: usize, c: i64, ops: &[Op]) -> PathCondition {
    let constraints = (0..d)
        .map(|_| {
            let mut coeffs = Vec::new();
            for v in 0..t {
                if rng.random_bool(0.75) {
                    coeffs.push((v, BigInt::from(rng.random_range(-c..=c))));
                }
            }
            let expr = LinExpr::from_parts(coeffs, BigInt::from(rng.random_range(-c..=c)));
            LinearConstraint::new(expr, ops[rng.random_range(0..ops.len())])
        })
        .collect();
    PathCondition::new(constraints)
}

/// Up to `d` constraints over `v0..v{t-1}` with coefficients and constants in
/// `[-c, c]`; zero coefficients drop their variable.
pub fn arb_pc(t: usize, d: usize, c: i64) -> impl Strategy<Value = PathCondition> {
    prop::collection::vec((prop::collection::vec(-c..=c, t), -c..=c, 0..ALL_OPS.len()), 1..=d).prop_map(|rows| {
        PathCondition::new(
            rows.into_iter()
                .map(|(cs, k, op)| {
                    let coeffs = cs.into_iter().enumerate().map(|(v, x)| (v, BigInt::from(x)));
                    LinearConstraint::new(LinExpr::from_parts(coeffs, BigInt::from(k)), ALL_OPS[op])
                })
                .collect(),
        )
    })
}

/// Applies `v -> map[v]` to every constraint.
pub fn rename(pc: &PathCondition, map: &[usize]) -> PathCondition {
    PathCondition::new(pc.constraints().iter().map(|c| c.rename(|v| map[v])).collect())
}
