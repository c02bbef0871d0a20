mod common;

use common::{random_pc, ALL_OPS};
use num_traits::One;
use pcsat::{brute_force_solve, solve, LinExpr, LinearConstraint, Op, PathCondition, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn agrees_with_box_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..1000 {
        let t = rng.random_range(1..=4);
        let d = rng.random_range(1..=6);
        let pc = random_pc(&mut rng, t, d, 9, &ALL_OPS);
        let exact = solve(&pc).unwrap_or_else(|e| panic!("#{i} {pc}: {e}"));
        let boxed = brute_force_solve(&pc, 64).unwrap();
        if let Verdict::Sat(m) = &exact {
            assert!(pc.holds(m), "#{i} {pc}: model {m:?} fails");
        }
        if boxed.is_sat() {
            assert!(exact.is_sat(), "#{i} {pc}: box model {boxed:?} but solver says Unsat");
        }
        if exact.is_sat() {
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    // Both verdicts must be exercised for the comparison to mean anything.
    assert!(sat > 100 && unsat > 100, "sat {sat} unsat {unsat}");
}

#[test]
fn box_models_are_lexicographically_minimal_and_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let pc = random_pc(&mut rng, 2, 3, 5, &ALL_OPS);
        if let Verdict::Sat(m) = brute_force_solve(&pc, 6).unwrap() {
            assert!(pc.holds(&m));
        }
    }
}

fn split_side(pc: &PathCondition, at: usize, expr: LinExpr) -> PathCondition {
    let mut cs = pc.constraints().to_vec();
    cs[at] = LinearConstraint::new(expr, Op::Leq);
    PathCondition::new(cs)
}

#[test]
fn disequality_is_union_of_strict_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    while checked < 300 {
        let t = rng.random_range(1..=3);
        let d = rng.random_range(1..=4);
        let pc = random_pc(&mut rng, t, d, 6, &ALL_OPS);
        let Some(at) = pc.constraints().iter().position(|c| c.op() == Op::Neq) else {
            continue;
        };
        let e = pc.constraints()[at].expr().clone();
        let one = LinExpr::from_constant(num_bigint::BigInt::one());
        let below = split_side(&pc, at, e.add(&one));
        let above = split_side(&pc, at, e.neg().add(&one));
        let whole = solve(&pc).unwrap().is_sat();
        let parts = solve(&below).unwrap().is_sat() || solve(&above).unwrap().is_sat();
        assert_eq!(whole, parts, "{pc}");
        checked += 1;
    }
}
