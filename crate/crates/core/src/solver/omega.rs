//! Integer projection for inequality systems that branch-and-bound cannot
//! close (unbounded, integer-empty relaxations). Complete: each step removes
//! a variable (real/dark shadow) or adds an equality that removes one
//! (splinter).

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::{tighten, Exhausted, Infeasible, Row, System};

struct Bounds {
    /// Rows `-a z + p <= 0` (`a > 0`), i.e. `a z >= p`.
    lower: Vec<(BigInt, Row)>,
    /// Rows `b z + p <= 0` (`b > 0`), i.e. `b z <= -p`.
    upper: Vec<(BigInt, Row)>,
    rest: Vec<Row>,
}

fn partition(rows: &[Row], z: usize) -> Bounds {
    let mut b = Bounds {
        lower: Vec::new(),
        upper: Vec::new(),
        rest: Vec::new(),
    };
    for r in rows {
        let c = &r.coeffs[z];
        if c.is_zero() {
            b.rest.push(r.clone());
        } else {
            let mut p = r.clone();
            p.coeffs[z] = BigInt::zero();
            if c.is_negative() {
                b.lower.push((-c, p));
            } else {
                b.upper.push((c.clone(), p));
            }
        }
    }
    b
}

fn combine(a: &BigInt, l: &Row, b: &BigInt, u: &Row, slack: BigInt) -> Row {
    Row {
        coeffs: l
            .coeffs
            .iter()
            .zip(&u.coeffs)
            .map(|(x, y)| b * x + a * y)
            .collect(),
        k: b * &l.k + a * &u.k + slack,
    }
}

fn shadow(bounds: &Bounds, dark: bool) -> Vec<Row> {
    let mut rows = bounds.rest.clone();
    for (a, l) in &bounds.lower {
        for (b, u) in &bounds.upper {
            let slack = if dark {
                (a - 1) * (b - 1)
            } else {
                BigInt::zero()
            };
            rows.push(combine(a, l, b, u, slack));
        }
    }
    rows
}

/// Smallest integer `z` allowed by the bounds at `y`, if any.
fn pick(bounds: &Bounds, y: &[BigInt]) -> Option<BigInt> {
    let lo = bounds
        .lower
        .iter()
        .map(|(a, p)| Integer::div_ceil(&p.eval(y), a))
        .max();
    let hi = bounds
        .upper
        .iter()
        .map(|(b, p)| Integer::div_floor(&-p.eval(y), b))
        .min();
    match (lo, hi) {
        (Some(l), Some(h)) => (l <= h).then_some(l),
        (Some(l), None) => Some(l),
        (None, Some(h)) => Some(h),
        (None, None) => Some(BigInt::zero()),
    }
}

/// Tightens, drops implied duplicates and detects opposite pairs. An opposite
/// pair meeting exactly is returned as an equality.
fn normalize(rows: Vec<Row>) -> Result<(Vec<Row>, Option<Row>), Infeasible> {
    let mut out: Vec<Row> = Vec::new();
    for r in rows {
        let Some(r) = tighten(r)? else { continue };
        out.push(r);
    }
    out.sort_by(|a, b| a.coeffs.cmp(&b.coeffs).then(b.k.cmp(&a.k)));
    out.dedup_by(|b, a| a.coeffs == b.coeffs);
    for r in &out {
        let neg: Vec<BigInt> = r.coeffs.iter().map(|c| -c).collect();
        if let Some(o) = out.iter().find(|x| x.coeffs == neg) {
            let sum = &r.k + &o.k;
            if sum.is_positive() {
                return Err(Infeasible);
            }
            if sum.is_zero() {
                let eq = r.clone();
                return Ok((out, Some(eq)));
            }
        }
    }
    Ok((out, None))
}

/// Solves the system `rows` together with `eq == 0` by eliminating `eq`.
fn with_equality(
    n: usize,
    rows: Vec<Row>,
    eq: Row,
    work: &mut usize,
    budget: usize,
) -> Result<Option<Vec<BigInt>>, Exhausted> {
    let mut sys = System::identity(n);
    sys.leq = rows;
    sys.eq.push(eq);
    if sys.eliminate_equalities().is_err() {
        return Ok(None);
    }
    let leq = std::mem::take(&mut sys.leq);
    Ok(solve(n, leq, work, budget)?.map(|y| sys.original_point(&y)))
}

pub(super) fn solve(
    n: usize,
    rows: Vec<Row>,
    work: &mut usize,
    budget: usize,
) -> Result<Option<Vec<BigInt>>, Exhausted> {
    *work += 1;
    if *work > budget {
        return Err(Exhausted);
    }
    let rows = match normalize(rows) {
        Err(Infeasible) => return Ok(None),
        Ok((rows, Some(eq))) => return with_equality(n, rows, eq, work, budget),
        Ok((rows, None)) => rows,
    };
    if rows.is_empty() {
        return Ok(Some(vec![BigInt::zero(); n]));
    }
    let live: Vec<usize> = (0..n)
        .filter(|&v| rows.iter().any(|r| !r.coeffs[v].is_zero()))
        .collect();
    let parts: Vec<(usize, Bounds)> = live.iter().map(|&v| (v, partition(&rows, v))).collect();

    // One-sided variable: its rows can always be satisfied afterwards.
    if let Some((z, b)) = parts
        .iter()
        .find(|(_, b)| b.lower.is_empty() || b.upper.is_empty())
    {
        let Some(mut y) = solve(n, b.rest.clone(), work, budget)? else {
            return Ok(None);
        };
        y[*z] = pick(b, &y).expect("one-sided bounds are always satisfiable");
        return Ok(Some(y));
    }

    let exact = |b: &Bounds| {
        b.lower.iter().all(|(a, _)| a.is_one()) || b.upper.iter().all(|(c, _)| c.is_one())
    };
    let cost = |b: &Bounds| b.lower.len() * b.upper.len();
    let (z, b) = parts
        .iter()
        .min_by_key(|(v, b)| (!exact(b), cost(b), *v))
        .unwrap();

    if exact(b) {
        let Some(mut y) = solve(n, shadow(b, false), work, budget)? else {
            return Ok(None);
        };
        y[*z] = pick(b, &y).expect("exact projection admits an integer");
        return Ok(Some(y));
    }
    if solve(n, shadow(b, false), work, budget)?.is_none() {
        return Ok(None);
    }
    if let Some(mut y) = solve(n, shadow(b, true), work, budget)? {
        y[*z] = pick(b, &y).expect("dark shadow admits an integer");
        return Ok(Some(y));
    }
    // Splinters: any integer point outside the dark shadow lies on
    // `a z = p + i` for some lower bound and small `i`.
    let m = b.upper.iter().map(|(c, _)| c).max().unwrap().clone();
    for (a, p) in &b.lower {
        let top = (&m * a - a - &m).div_floor(&m);
        let mut i = BigInt::zero();
        while i <= top {
            let mut eq = p.clone();
            eq.coeffs[*z] = -a;
            eq.k += &i;
            if let Some(y) = with_equality(n, rows.clone(), eq, work, budget)? {
                return Ok(Some(y));
            }
            i += 1;
        }
    }
    Ok(None)
}
