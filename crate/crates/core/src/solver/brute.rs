//! Box enumeration. Independent of the simplex path; used as a test oracle
//! and as the last resort when branch-and-bound runs out of nodes.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;

use super::{Model, SolveError, Verdict};
use crate::pc::{Op, PathCondition};

/// Largest box `(2 * bound + 1)^t` the public oracle will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000_000;

struct Row {
    coeffs: Vec<i128>,
    k: i128,
    op: Op,
    /// `reach[i]` = bound * sum of |coeffs[i..]|.
    reach: Vec<i128>,
}

fn holds(op: Op, s: i128) -> bool {
    match op {
        Op::Eq => s == 0,
        Op::Neq => s != 0,
        Op::Leq => s <= 0,
        Op::Lt => s < 0,
        Op::Gt => s > 0,
        Op::Geq => s >= 0,
    }
}

/// Whether some value in `[lo, hi]` satisfies `op`.
fn reachable(op: Op, lo: i128, hi: i128) -> bool {
    match op {
        Op::Eq => lo <= 0 && 0 <= hi,
        Op::Neq => !(lo == 0 && hi == 0),
        Op::Leq => lo <= 0,
        Op::Lt => lo < 0,
        Op::Gt => hi > 0,
        Op::Geq => hi >= 0,
    }
}

fn box_size(bound: u64, t: usize) -> u128 {
    let side = 2 * bound as u128 + 1;
    let mut n: u128 = 1;
    for _ in 0..t {
        n = n.saturating_mul(side);
    }
    n
}

/// Enumerates `[-bound, bound]^t` in lexicographic order and returns the
/// smallest model, or `Unsat` when the box holds none. `Unsat` here is
/// relative to the box only.
pub fn brute_force_solve(pc: &PathCondition, bound: u64) -> Result<Verdict, SolveError> {
    box_search(pc, bound, BRUTE_FORCE_CAP).map(|m| m.map_or(Verdict::Unsat, Verdict::Sat))
}

pub(crate) fn box_search(
    pc: &PathCondition,
    bound: u64,
    cap: u128,
) -> Result<Option<Model>, SolveError> {
    let vars: Vec<usize> = pc.vars().into_iter().collect();
    let t = vars.len();
    let size = box_size(bound, t);
    if size > cap {
        return Err(SolveError::BoxTooLarge { bound, vars: t });
    }
    let too_large = || SolveError::BoxTooLarge { bound, vars: t };
    let b = bound as i128;
    let mut rows = Vec::new();
    for c in pc.constraints() {
        let mut coeffs = vec![0i128; t];
        for (v, a) in c.coeffs() {
            let i = vars.binary_search(v).unwrap();
            coeffs[i] = a.to_i64().ok_or_else(too_large)? as i128;
        }
        let k = c.constant().to_i64().ok_or_else(too_large)? as i128;
        if coeffs.iter().all(|&a| a == 0) {
            if !holds(c.op(), k) {
                return Ok(None);
            }
            continue;
        }
        let mut reach = vec![0i128; t + 1];
        for i in (0..t).rev() {
            reach[i] = reach[i + 1] + coeffs[i].abs() * b;
        }
        rows.push(Row {
            coeffs,
            k,
            op: c.op(),
            reach,
        });
    }
    if t == 0 {
        return Ok(Some(Model::new()));
    }
    let mut point = vec![0i128; t];
    let partial: Vec<i128> = rows.iter().map(|r| r.k).collect();
    if dfs(&rows, b, 0, &partial, &mut point) {
        Ok(Some(
            vars.iter()
                .zip(&point)
                .map(|(&v, &x)| (v, BigInt::from(x)))
                .collect(),
        ))
    } else {
        Ok(None)
    }
}

fn dfs(rows: &[Row], b: i128, i: usize, partial: &[i128], point: &mut [i128]) -> bool {
    let t = point.len();
    if i + 1 == t {
        return match last_value(rows, b, partial) {
            Some(x) => {
                point[i] = x;
                true
            }
            None => false,
        };
    }
    let mut next = vec![0i128; rows.len()];
    'values: for x in -b..=b {
        for (r, row) in rows.iter().enumerate() {
            let s = partial[r] + row.coeffs[i] * x;
            let rest = row.reach[i + 1];
            if !reachable(row.op, s - rest, s + rest) {
                continue 'values;
            }
            next[r] = s;
        }
        point[i] = x;
        if dfs(rows, b, i + 1, &next, point) {
            return true;
        }
    }
    false
}

/// Smallest `x` in `[-b, b]` satisfying every row with all but the last
/// variable fixed (`partial` holds the fixed part of each row).
fn last_value(rows: &[Row], b: i128, partial: &[i128]) -> Option<i128> {
    let last = rows.first().map_or(0, |r| r.coeffs.len() - 1);
    let mut lo = -b;
    let mut hi = b;
    let mut holes = Vec::new();
    for (row, &p) in rows.iter().zip(partial) {
        let a = row.coeffs[last];
        if a == 0 {
            if !holds(row.op, p) {
                return None;
            }
            continue;
        }
        // Every op reduces to `a*x + p` compared with 0; `<`/`>` tighten by one.
        let (a, p, op) = match row.op {
            Op::Lt => (a, p + 1, Op::Leq),
            Op::Gt => (-a, -p + 1, Op::Leq),
            Op::Geq => (-a, -p, Op::Leq),
            op => (a, p, op),
        };
        match op {
            Op::Leq => {
                if a > 0 {
                    hi = hi.min(Integer::div_floor(&-p, &a));
                } else {
                    lo = lo.max(Integer::div_ceil(&-p, &a));
                }
            }
            Op::Eq => {
                if p % a != 0 {
                    return None;
                }
                let x = -p / a;
                lo = lo.max(x);
                hi = hi.min(x);
            }
            Op::Neq => {
                if p % a == 0 {
                    holes.push(-p / a);
                }
            }
            _ => unreachable!(),
        }
    }
    holes.sort_unstable();
    let mut x = lo;
    for h in holes {
        if h == x {
            x += 1;
        }
    }
    (x <= hi).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc::parse_pc;

    fn run(text: &str, bound: u64) -> Verdict {
        brute_force_solve(&parse_pc(text).unwrap(), bound).unwrap()
    }

    #[test]
    fn fixed_point() {
        let v = run("v0 - 5 == 0", 10);
        assert_eq!(v, Verdict::Sat([(0, BigInt::from(5))].into_iter().collect()));
    }

    #[test]
    fn parity_has_no_model() {
        assert_eq!(run("2*v0 - 1 == 0", 10), Verdict::Unsat);
    }

    #[test]
    fn lexicographically_smallest() {
        let v = run("v0 + v1 - 3 == 0 && v0 != -4", 4);
        assert_eq!(
            v,
            Verdict::Sat([(0, BigInt::from(-1)), (1, BigInt::from(4))].into_iter().collect())
        );
        // Holes at consecutive values are skipped.
        let v = run("v0 != -2 && v0 != -1 && v0 + 2 >= 0", 4);
        assert_eq!(v, Verdict::Sat([(0, BigInt::from(0))].into_iter().collect()));
    }

    #[test]
    fn matches_naive_enumeration() {
        let pcs = [
            "2*v0 + 3*v1 - 7 <= 0 && v0 - v1 > 1 && v1 != 0",
            "v0 + v1 + v2 == 2 && 3*v0 - v2 >= 4 && v1 < 0",
            "5*v0 - 3*v1 == 1 && v0 + v1 > 2",
        ];
        for text in pcs {
            let pc = parse_pc(text).unwrap();
            let vars: Vec<usize> = pc.vars().into_iter().collect();
            let mut naive = None;
            let b = 5i64;
            let n = vars.len() as u32;
            for idx in 0..(2 * b + 1).pow(n) {
                let mut rest = idx;
                let mut m = Model::new();
                for &v in vars.iter().rev() {
                    m.insert(v, BigInt::from(rest % (2 * b + 1) - b));
                    rest /= 2 * b + 1;
                }
                if pc.holds(&m) {
                    naive = Some(m);
                    break;
                }
            }
            let got = brute_force_solve(&pc, b as u64).unwrap();
            assert_eq!(got, naive.map_or(Verdict::Unsat, Verdict::Sat), "{text}");
        }
    }

    #[test]
    fn box_limit() {
        let pc = parse_pc("a + b + c + d + e <= 0").unwrap();
        assert!(matches!(
            brute_force_solve(&pc, 1000),
            Err(SolveError::BoxTooLarge { .. })
        ));
    }
}
