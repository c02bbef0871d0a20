//! Exact satisfiability over unbounded integers.
//!
//! Pipeline: equalities are eliminated by unimodular column operations
//! (`x = T y + x0`), inequalities are gcd-tightened, disequalities are split
//! lazily into two strict sides, and each side goes through branch-and-bound
//! on an exact-rational simplex relaxation.

mod brute;
mod omega;
mod simplex;

use std::collections::BTreeMap;
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use brute::{brute_force_solve, BRUTE_FORCE_CAP};
use simplex::Simplex;

use crate::pc::{Op, PathCondition};

pub type Model = BTreeMap<usize, BigInt>;

pub const DEFAULT_NODE_BUDGET: usize = 100_000;
const MAX_DEPTH: usize = 1_000;
/// Widening boxes tried after the node budget is spent.
const FALLBACK_BOUNDS: [u64; 3] = [1 << 4, 1 << 8, 1 << 16];
const FALLBACK_CAP: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sat(Model),
    Unsat,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat(_))
    }

    pub fn model(&self) -> Option<&Model> {
        match self {
            Verdict::Sat(m) => Some(m),
            Verdict::Unsat => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("branch-and-bound node budget of {nodes} exhausted")]
    ResourceLimit { nodes: usize },
    #[error("box [-{bound}, {bound}]^{vars} is too large to enumerate")]
    BoxTooLarge { bound: u64, vars: usize },
}

#[derive(Clone, Debug)]
pub struct Solver {
    node_budget: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Solver::new(DEFAULT_NODE_BUDGET)
    }
}

/// `coeffs . y + k`, over the current (possibly transformed) variables.
#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<BigInt>,
    k: BigInt,
}

impl Row {
    fn eval(&self, y: &[BigInt]) -> BigInt {
        self.coeffs.iter().zip(y).map(|(a, v)| a * v).sum::<BigInt>() + &self.k
    }

    fn neg(&self) -> Row {
        Row {
            coeffs: self.coeffs.iter().map(|a| -a).collect(),
            k: -&self.k,
        }
    }

    fn shifted(mut self, d: i64) -> Row {
        self.k += d;
        self
    }

    fn gcd(&self) -> BigInt {
        self.coeffs.iter().fold(BigInt::zero(), |g, a| g.gcd(a))
    }
}

struct Infeasible;
struct Exhausted;

/// Rows of `<= 0`, `== 0` and `!= 0` plus the map back to the original
/// variables: `x = t * y + x0`.
struct System {
    leq: Vec<Row>,
    eq: Vec<Row>,
    neq: Vec<Row>,
    t: Vec<Vec<BigInt>>,
    x0: Vec<BigInt>,
}

impl System {
    fn identity(n: usize) -> System {
        System {
            leq: Vec::new(),
            eq: Vec::new(),
            neq: Vec::new(),
            t: (0..n)
                .map(|i| (0..n).map(|j| BigInt::from((i == j) as u8)).collect())
                .collect(),
            x0: vec![BigInt::zero(); n],
        }
    }

    fn build(pc: &PathCondition, vars: &[usize]) -> System {
        let n = vars.len();
        let mut sys = System::identity(n);
        for c in pc.constraints() {
            let mut coeffs = vec![BigInt::zero(); n];
            for (v, a) in c.coeffs() {
                coeffs[vars.binary_search(v).unwrap()] = a.clone();
            }
            let row = Row {
                coeffs,
                k: c.constant().clone(),
            };
            match c.op() {
                Op::Eq => sys.eq.push(row),
                Op::Neq => sys.neq.push(row),
                Op::Leq => sys.leq.push(row),
                Op::Lt => sys.leq.push(row.shifted(1)),
                Op::Gt => sys.leq.push(row.neg().shifted(1)),
                Op::Geq => sys.leq.push(row.neg()),
            }
        }
        sys
    }

    fn rows_mut(&mut self) -> impl Iterator<Item = &mut Row> {
        self.leq.iter_mut().chain(self.eq.iter_mut()).chain(self.neq.iter_mut())
    }

    /// Substitutes `y_i := y_i - q * y_j`, i.e. column `i` -= `q` * column `j`.
    fn column_op(&mut self, cur: &mut Row, i: usize, j: usize, q: &BigInt) {
        let apply = |c: &mut Vec<BigInt>| {
            let d = q * &c[j];
            c[i] -= d;
        };
        apply(&mut cur.coeffs);
        for row in self.rows_mut() {
            apply(&mut row.coeffs);
        }
        for row in self.t.iter_mut() {
            apply(row);
        }
    }

    /// Fixes `y_j := val`.
    fn fix(&mut self, j: usize, val: &BigInt) {
        for row in self.rows_mut() {
            let a = std::mem::take(&mut row.coeffs[j]);
            row.k += a * val;
        }
        for (row, x) in self.t.iter_mut().zip(self.x0.iter_mut()) {
            let a = std::mem::take(&mut row[j]);
            *x += a * val;
        }
    }

    /// Removes every equality. Each step keeps the lattice of integer points
    /// intact because column operations are unimodular.
    fn eliminate_equalities(&mut self) -> Result<(), Infeasible> {
        while !self.eq.is_empty() {
            let mut cur = self.eq.remove(0);
            let g = cur.gcd();
            if g.is_zero() {
                if cur.k.is_zero() {
                    continue;
                }
                return Err(Infeasible);
            }
            if !cur.k.is_multiple_of(&g) {
                return Err(Infeasible);
            }
            loop {
                let nz: Vec<usize> = (0..cur.coeffs.len())
                    .filter(|&i| !cur.coeffs[i].is_zero())
                    .collect();
                if let [j] = nz[..] {
                    let val = -(&cur.k / &cur.coeffs[j]);
                    self.fix(j, &val);
                    break;
                }
                let j = *nz.iter().min_by_key(|&&i| cur.coeffs[i].abs()).unwrap();
                for &i in &nz {
                    if i != j {
                        let q = cur.coeffs[i].div_floor(&cur.coeffs[j]);
                        self.column_op(&mut cur, i, j, &q);
                    }
                }
            }
        }
        Ok(())
    }

    fn original_point(&self, y: &[BigInt]) -> Vec<BigInt> {
        self.t
            .iter()
            .zip(&self.x0)
            .map(|(row, x0)| row.iter().zip(y).map(|(a, v)| a * v).sum::<BigInt>() + x0)
            .collect()
    }
}

/// `a . y + k <= 0` with `g = gcd(a)` becomes `(a/g) . y + ceil(k/g) <= 0`.
/// Constant rows are decided on the spot (`None` means trivially true).
fn tighten(row: Row) -> Result<Option<Row>, Infeasible> {
    let g = row.gcd();
    if g.is_zero() {
        return if row.k.is_positive() {
            Err(Infeasible)
        } else {
            Ok(None)
        };
    }
    if g.is_one() {
        return Ok(Some(row));
    }
    Ok(Some(Row {
        coeffs: row.coeffs.iter().map(|a| a / &g).collect(),
        k: Integer::div_ceil(&row.k, &g),
    }))
}

impl Solver {
    pub fn new(node_budget: usize) -> Self {
        Solver { node_budget }
    }

    pub fn node_budget(&self) -> usize {
        self.node_budget
    }

    /// Decides `pc` over unbounded integers. A `Sat` model assigns every
    /// variable that occurs in `pc`.
    pub fn solve(&self, pc: &PathCondition) -> Result<Verdict, SolveError> {
        let vars: Vec<usize> = pc.vars().into_iter().collect();
        let mut sys = System::build(pc, &vars);
        if sys.eliminate_equalities().is_err() {
            return Ok(Verdict::Unsat);
        }
        let mut leq = Vec::with_capacity(sys.leq.len());
        for row in std::mem::take(&mut sys.leq) {
            match tighten(row) {
                Err(Infeasible) => return Ok(Verdict::Unsat),
                Ok(Some(r)) => leq.push(r),
                Ok(None) => {}
            }
        }
        let mut neq = Vec::new();
        for row in std::mem::take(&mut sys.neq) {
            if row.gcd().is_zero() {
                if row.k.is_zero() {
                    return Ok(Verdict::Unsat);
                }
            } else {
                neq.push(row);
            }
        }
        let mut nodes = 0usize;
        match self.split(vars.len(), &leq, &neq, &mut nodes) {
            Ok(Some(y)) => {
                let x = sys.original_point(&y);
                let model: Model = vars.iter().copied().zip(x).collect();
                debug_assert!(pc.holds(&model), "model violates {pc}");
                Ok(Verdict::Sat(model))
            }
            Ok(None) => Ok(Verdict::Unsat),
            Err(Exhausted) => self.fallback(pc),
        }
    }

    fn fallback(&self, pc: &PathCondition) -> Result<Verdict, SolveError> {
        for bound in FALLBACK_BOUNDS {
            match brute::box_search(pc, bound, FALLBACK_CAP) {
                Ok(Some(m)) => return Ok(Verdict::Sat(m)),
                Ok(None) => continue,
                Err(_) => break,
            }
        }
        log::debug!("node budget exhausted on {pc}");
        Err(SolveError::ResourceLimit {
            nodes: self.node_budget,
        })
    }

    /// Finds an integer point of `leq` avoiding every `neq` hyperplane.
    /// A violated disequality `e != 0` splits into `e + 1 <= 0` then
    /// `-e + 1 <= 0`; each side keeps it satisfied for good.
    fn split(
        &self,
        n: usize,
        leq: &[Row],
        neq: &[Row],
        nodes: &mut usize,
    ) -> Result<Option<Vec<BigInt>>, Exhausted> {
        let Some(y) = self.integer_point(n, leq, nodes)? else {
            return Ok(None);
        };
        let Some(r) = neq.iter().position(|row| row.eval(&y).is_zero()) else {
            return Ok(Some(y));
        };
        let rest: Vec<Row> = neq
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != r)
            .map(|(_, row)| row.clone())
            .collect();
        for side in [neq[r].clone().shifted(1), neq[r].neg().shifted(1)] {
            let Ok(side) = tighten(side) else { continue };
            let mut branch = leq.to_vec();
            branch.extend(side);
            if let Some(y) = self.split(n, &branch, &rest, nodes)? {
                return Ok(Some(y));
            }
        }
        Ok(None)
    }

    /// Branch-and-bound on a tenth of the budget, then integer projection,
    /// which also decides unbounded systems without integer points.
    fn integer_point(
        &self,
        n: usize,
        leq: &[Row],
        nodes: &mut usize,
    ) -> Result<Option<Vec<BigInt>>, Exhausted> {
        let quick = (self.node_budget / 10).max(1);
        if let Ok(found) = self.branch_and_bound(n, leq, quick, nodes) {
            return Ok(found);
        }
        let mut work = 0;
        omega::solve(n, leq.to_vec(), &mut work, self.node_budget)
    }

    /// Depth-first branch-and-bound, floor side first. Each node holds its
    /// parent's solved tableau and the one bound it adds.
    fn branch_and_bound(
        &self,
        n: usize,
        leq: &[Row],
        budget: usize,
        nodes: &mut usize,
    ) -> Result<Option<Vec<BigInt>>, Exhausted> {
        enum Bound {
            Upper(BigInt),
            Lower(BigInt),
        }
        struct Node {
            base: Rc<Simplex>,
            bound: Option<(usize, Bound)>,
            depth: usize,
        }
        let ineqs: Vec<(Vec<BigInt>, BigInt)> =
            leq.iter().map(|r| (r.coeffs.clone(), r.k.clone())).collect();
        let mut stack = vec![Node {
            base: Rc::new(Simplex::new(n, &ineqs)),
            bound: None,
            depth: 0,
        }];
        let mut spent = 0;
        while let Some(node) = stack.pop() {
            *nodes += 1;
            spent += 1;
            if spent > budget {
                return Err(Exhausted);
            }
            let mut sx = Rc::unwrap_or_clone(node.base);
            let ok = match node.bound {
                None => true,
                Some((v, Bound::Upper(b))) => sx.assert_upper(v, b),
                Some((v, Bound::Lower(b))) => sx.assert_lower(v, b),
            };
            if !ok || !sx.check() {
                continue;
            }
            let Some((v, val)) = sx.most_fractional() else {
                return Ok(Some(sx.integer_point()));
            };
            if node.depth >= MAX_DEPTH {
                return Err(Exhausted);
            }
            let base = Rc::new(sx);
            let depth = node.depth + 1;
            stack.push(Node {
                base: Rc::clone(&base),
                bound: Some((v, Bound::Lower(val.ceil().to_integer()))),
                depth,
            });
            stack.push(Node {
                base,
                bound: Some((v, Bound::Upper(val.floor().to_integer()))),
                depth,
            });
        }
        Ok(None)
    }
}

/// [`Solver::solve`] with the default node budget.
pub fn solve(pc: &PathCondition) -> Result<Verdict, SolveError> {
    Solver::default().solve(pc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc::parse_pc;

    fn run(text: &str) -> Verdict {
        let pc = parse_pc(text).unwrap();
        let v = solve(&pc).unwrap();
        if let Verdict::Sat(m) = &v {
            assert!(pc.holds(m), "{text}: {m:?}");
        }
        v
    }

    #[test]
    fn bound_conflict() {
        assert_eq!(run("v0 + 1 <= 0 && -1*v0 <= 0"), Verdict::Unsat);
    }

    #[test]
    fn fixed_value() {
        assert_eq!(
            run("v0 - 5 == 0"),
            Verdict::Sat([(0, BigInt::from(5))].into_iter().collect())
        );
    }

    #[test]
    fn parity() {
        assert_eq!(run("2*v0 - 1 == 0"), Verdict::Unsat);
        assert_eq!(run("6*x + 10*y == 7"), Verdict::Unsat);
        assert!(run("6*x + 10*y == 8").is_sat());
    }

    #[test]
    fn integer_gap_in_rational_feasible_region() {
        // 1 <= 3x <= 2 has rational but no integer solutions.
        assert_eq!(run("3*x >= 1 && 3*x <= 2"), Verdict::Unsat);
        // No row has a common factor; refuted only by branching.
        assert_eq!(run("3*x + y >= 1 && 3*x + y <= 2 && y >= 0 && y <= 0"), Verdict::Unsat);
        assert_eq!(run("2*x - 2*y >= 1 && 2*x - 2*y <= 1"), Verdict::Unsat);
        assert!(run("7*x - 5*y >= 1 && 7*x - 5*y <= 1 && x > 10").is_sat());
    }

    #[test]
    fn disequalities() {
        assert_eq!(run("x >= 0 && x <= 0 && x != 0"), Verdict::Unsat);
        assert!(run("x >= 0 && x <= 1 && x != 0").is_sat());
        assert_eq!(run("x >= 0 && x <= 2 && x != 0 && x != 1 && x != 2"), Verdict::Unsat);
        assert_eq!(run("0 != 0"), Verdict::Unsat);
        assert!(run("x + y != 3").is_sat());
    }

    #[test]
    fn constants_and_empty() {
        assert!(run("0 == 0").is_sat());
        assert_eq!(run("1 <= 0"), Verdict::Unsat);
        assert_eq!(run("x == x + 1"), Verdict::Unsat);
    }

    #[test]
    fn unbounded_region() {
        assert!(run("x - y >= 100 && x + y >= 1000").is_sat());
        assert!(run("3*x + 5*y == 1 && x > 1000").is_sat());
    }

    #[test]
    fn large_coefficients_stay_exact() {
        assert!(run("1000000007*x - 999999937*y == 1").is_sat());
        assert_eq!(
            run("2147483646*x + 2147483646*y == 1"),
            Verdict::Unsat
        );
    }

    /// Bounded random systems, where box enumeration is an exact oracle for
    /// each engine on its own.
    #[test]
    fn each_engine_is_exact_on_bounded_systems() {
        use crate::pc::{LinExpr, LinearConstraint};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = 4i64;
        for _ in 0..400 {
            let n = rng.random_range(1..=3);
            let mut rows: Vec<Row> = (0..rng.random_range(1..=4))
                .map(|_| Row {
                    coeffs: (0..n).map(|_| BigInt::from(rng.random_range(-7..=7))).collect(),
                    k: BigInt::from(rng.random_range(-9..=9)),
                })
                .collect();
            for v in 0..n {
                let mut unit = vec![BigInt::zero(); n];
                unit[v] = BigInt::one();
                rows.push(Row { coeffs: unit.clone(), k: BigInt::from(-b) });
                rows.push(Row { coeffs: unit, k: BigInt::from(-b) }.neg());
            }
            let pc = PathCondition::new(
                rows.iter()
                    .map(|r| {
                        let e = LinExpr::from_parts(
                            r.coeffs.iter().cloned().enumerate(),
                            r.k.clone(),
                        );
                        LinearConstraint::new(e, Op::Leq)
                    })
                    .collect(),
            );
            // Variables absent from every row still count for the point.
            let expect = brute_force_solve(&pc, b as u64).unwrap().is_sat();
            let solver = Solver::default();
            let check = |y: Option<Vec<BigInt>>| {
                if let Some(y) = &y {
                    assert!(rows.iter().all(|r| !r.eval(y).is_positive()), "{pc}: {y:?}");
                }
                y.is_some()
            };
            let mut nodes = 0;
            let bb = solver.branch_and_bound(n, &rows, usize::MAX, &mut nodes).ok().unwrap();
            assert_eq!(check(bb), expect, "branch-and-bound on {pc}");
            let mut work = 0;
            let om = omega::solve(n, rows.clone(), &mut work, usize::MAX).ok().unwrap();
            assert_eq!(check(om), expect, "projection on {pc}");
        }
    }

    #[test]
    fn projection_decides_what_branching_cannot() {
        let pc = parse_pc(
            "2*v1 + -2*v2 + 9*v3 + -4 >= 0 && 9*v0 + 6*v1 + -5*v2 + -3*v3 + -6 == 0 \
             && 5*v0 + 2*v2 + 6*v3 + 0 > 0 && 3*v0 + -9*v1 + -3*v2 + -6*v3 + -7 > 0 \
             && -1*v2 + 3*v3 + 4 >= 0 && 9*v0 + 6*v1 + -3*v2 + 8*v3 + 1 < 0",
        )
        .unwrap();
        // Branching alone runs away on this one.
        let mut sys = System::build(&pc, &[0, 1, 2, 3]);
        assert!(sys.eliminate_equalities().is_ok());
        let leq: Vec<Row> = sys.leq.drain(..).filter_map(|r| tighten(r).ok().flatten()).collect();
        let mut nodes = 0;
        assert!(Solver::default().branch_and_bound(4, &leq, 20_000, &mut nodes).is_err());
        let Ok(Verdict::Sat(m)) = solve(&pc) else {
            panic!("expected a model");
        };
        assert!(pc.holds(&m));
        assert!(brute_force_solve(&pc, 64).unwrap().is_sat());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let pc = parse_pc("3*x + y >= 1 && 3*x + y <= 2 && y >= 0 && y <= 0").unwrap();
        assert_eq!(solve(&pc), Ok(Verdict::Unsat));
        let tiny = Solver::new(1);
        match tiny.solve(&pc) {
            Ok(Verdict::Unsat) | Err(SolveError::ResourceLimit { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
