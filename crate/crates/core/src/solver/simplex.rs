//! Exact-rational feasibility simplex over bounded variables.
//!
//! Variables `0..n` are structural; variable `n + r` is the slack of row `r`
//! (`slack = a_r . x`). Every bound is an integer. The tableau keeps each basic
//! variable as a combination of the non-basic ones.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

type Rat = BigRational;

#[derive(Clone, Debug)]
pub(crate) struct Simplex {
    nvars: usize,
    rows: Vec<Vec<Rat>>,
    basic: Vec<usize>,
    row_of: Vec<Option<usize>>,
    lower: Vec<Option<BigInt>>,
    upper: Vec<Option<BigInt>>,
    value: Vec<Rat>,
}

fn rat(v: &BigInt) -> Rat {
    Rat::from_integer(v.clone())
}

impl Simplex {
    /// One row per inequality `coeffs . x + k <= 0`.
    pub(crate) fn new(nvars: usize, ineqs: &[(Vec<BigInt>, BigInt)]) -> Self {
        let total = nvars + ineqs.len();
        let mut rows = Vec::with_capacity(ineqs.len());
        let mut upper = vec![None; total];
        for (r, (coeffs, k)) in ineqs.iter().enumerate() {
            let mut row = vec![Rat::zero(); total];
            for (j, a) in coeffs.iter().enumerate() {
                row[j] = rat(a);
            }
            rows.push(row);
            upper[nvars + r] = Some(-k);
        }
        let mut row_of = vec![None; total];
        for r in 0..ineqs.len() {
            row_of[nvars + r] = Some(r);
        }
        Simplex {
            nvars,
            rows,
            basic: (nvars..total).collect(),
            row_of,
            lower: vec![None; total],
            upper,
            value: vec![Rat::zero(); total],
        }
    }

    fn total(&self) -> usize {
        self.value.len()
    }

    fn below(&self, v: usize) -> bool {
        self.lower[v].as_ref().is_some_and(|l| self.value[v] < rat(l))
    }

    fn above(&self, v: usize) -> bool {
        self.upper[v].as_ref().is_some_and(|u| self.value[v] > rat(u))
    }

    fn can_increase(&self, v: usize) -> bool {
        self.upper[v].as_ref().is_none_or(|u| self.value[v] < rat(u))
    }

    fn can_decrease(&self, v: usize) -> bool {
        self.lower[v].as_ref().is_none_or(|l| self.value[v] > rat(l))
    }

    /// Moves non-basic `v` to `target`, dragging the basic variables along.
    fn update(&mut self, v: usize, target: Rat) {
        let delta = &target - &self.value[v];
        for (r, row) in self.rows.iter().enumerate() {
            if !row[v].is_zero() {
                let b = self.basic[r];
                self.value[b] += &row[v] * &delta;
            }
        }
        self.value[v] = target;
    }

    /// Swaps basic `self.basic[r]` with non-basic `entering`.
    fn pivot(&mut self, r: usize, entering: usize) {
        let leaving = self.basic[r];
        let a = self.rows[r][entering].clone();
        let mut new_row: Vec<Rat> = self.rows[r].iter().map(|c| -(c / &a)).collect();
        new_row[entering] = Rat::zero();
        new_row[leaving] = a.recip();
        for (r2, row) in self.rows.iter_mut().enumerate() {
            if r2 == r || row[entering].is_zero() {
                continue;
            }
            let c = std::mem::replace(&mut row[entering], Rat::zero());
            for (cell, n) in row.iter_mut().zip(&new_row) {
                if !n.is_zero() {
                    *cell += &c * n;
                }
            }
        }
        self.rows[r] = new_row;
        self.basic[r] = entering;
        self.row_of[entering] = Some(r);
        self.row_of[leaving] = None;
    }

    fn pivot_and_update(&mut self, leaving: usize, entering: usize, target: Rat) {
        let r = self.row_of[leaving].expect("leaving variable is basic");
        let theta = (&target - &self.value[leaving]) / &self.rows[r][entering];
        self.value[leaving] = target;
        self.value[entering] += &theta;
        for (r2, row) in self.rows.iter().enumerate() {
            if r2 != r && !row[entering].is_zero() {
                let b = self.basic[r2];
                self.value[b] += &row[entering] * &theta;
            }
        }
        self.pivot(r, entering);
    }

    /// Restores all bounds or proves the bound set infeasible. Bland's rule
    /// (lowest index for both leaving and entering choices) prevents cycling.
    pub(crate) fn check(&mut self) -> bool {
        loop {
            let Some(xi) = (0..self.total())
                .find(|&v| self.row_of[v].is_some() && (self.below(v) || self.above(v)))
            else {
                return true;
            };
            let r = self.row_of[xi].unwrap();
            let raise = self.below(xi);
            let entering = (0..self.total()).find(|&j| {
                if self.row_of[j].is_some() {
                    return false;
                }
                let a = &self.rows[r][j];
                if a.is_zero() {
                    return false;
                }
                let up = a.is_positive() == raise;
                if up {
                    self.can_increase(j)
                } else {
                    self.can_decrease(j)
                }
            });
            let Some(xj) = entering else {
                return false;
            };
            let target = if raise {
                rat(self.lower[xi].as_ref().unwrap())
            } else {
                rat(self.upper[xi].as_ref().unwrap())
            };
            self.pivot_and_update(xi, xj, target);
        }
    }

    /// Tightens `x_v <= bound`. Returns false on an empty bound interval.
    pub(crate) fn assert_upper(&mut self, v: usize, bound: BigInt) -> bool {
        if self.lower[v].as_ref().is_some_and(|l| *l > bound) {
            return false;
        }
        if self.upper[v].as_ref().is_some_and(|u| *u <= bound) {
            return true;
        }
        let b = rat(&bound);
        self.upper[v] = Some(bound);
        if self.row_of[v].is_none() && self.value[v] > b {
            self.update(v, b);
        }
        true
    }

    /// Tightens `x_v >= bound`. Returns false on an empty bound interval.
    pub(crate) fn assert_lower(&mut self, v: usize, bound: BigInt) -> bool {
        if self.upper[v].as_ref().is_some_and(|u| *u < bound) {
            return false;
        }
        if self.lower[v].as_ref().is_some_and(|l| *l >= bound) {
            return true;
        }
        let b = rat(&bound);
        self.lower[v] = Some(bound);
        if self.row_of[v].is_none() && self.value[v] < b {
            self.update(v, b);
        }
        true
    }

    /// Structural variable with the largest fractional part (lowest index on
    /// ties), with its current value.
    pub(crate) fn most_fractional(&self) -> Option<(usize, Rat)> {
        let mut best: Option<(usize, Rat)> = None;
        for v in 0..self.nvars {
            let x = &self.value[v];
            if x.is_integer() {
                continue;
            }
            let frac = x - x.floor();
            if best.as_ref().is_none_or(|(_, f)| frac > *f) {
                best = Some((v, frac));
            }
        }
        best.map(|(v, _)| (v, self.value[v].clone()))
    }

    /// Integer values of the structural variables. Only meaningful when
    /// [`Self::most_fractional`] is `None`.
    pub(crate) fn integer_point(&self) -> Vec<BigInt> {
        self.value[..self.nvars]
            .iter()
            .map(|x| {
                debug_assert!(x.is_integer());
                x.to_integer()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn ineq(c: &[i64], k: i64) -> (Vec<BigInt>, BigInt) {
        (c.iter().map(|&x| BigInt::from(x)).collect(), BigInt::from(k))
    }

    #[test]
    fn feasible_relaxation_has_satisfying_point() {
        // x + y >= 3, x <= 1, y <= 2
        let rows = vec![ineq(&[-1, -1], 3), ineq(&[1, 0], -1), ineq(&[0, 1], -2)];
        let mut s = Simplex::new(2, &rows);
        assert!(s.check());
        let x = &s.value[0];
        let y = &s.value[1];
        assert!(x + y >= Rat::from_integer(3.into()));
        assert!(*x <= Rat::one());
    }

    #[test]
    fn infeasible_relaxation_detected() {
        // x + y >= 3, x + y <= 2
        let rows = vec![ineq(&[-1, -1], 3), ineq(&[1, 1], -2)];
        let mut s = Simplex::new(2, &rows);
        assert!(!s.check());
    }

    #[test]
    fn fractional_vertex_and_bounds() {
        // 2x >= 1, 2x <= 1 -> x = 1/2
        let rows = vec![ineq(&[-2], 1), ineq(&[2], -1)];
        let mut s = Simplex::new(1, &rows);
        assert!(s.check());
        let (v, val) = s.most_fractional().unwrap();
        assert_eq!(v, 0);
        assert_eq!(val, Rat::new(1.into(), 2.into()));
        let mut floor = s.clone();
        assert!(floor.assert_upper(0, 0.into()));
        assert!(!floor.check());
        assert!(s.assert_lower(0, 1.into()));
        assert!(!s.check());
    }
}
