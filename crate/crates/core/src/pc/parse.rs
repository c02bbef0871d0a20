use std::collections::{BTreeMap, HashMap};

use super::{LinearConstraint, PathCondition, PcError};
use crate::expr::{parse_cmp, Cmp, ExprError};
use crate::lex::{tokenize, Cursor, Tok};

impl From<ExprError> for PcError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Syntax(pos, msg) => PcError::Syntax { pos, msg },
            ExprError::Nonlinear(pos, msg) => PcError::Nonlinear { pos, msg },
        }
    }
}

/// Parses `cmp (&& cmp)*` into a non-canonical path condition.
///
/// Variable indices follow the order of first appearance in the text. The one
/// exception: when every identifier has the form `v<N>`, `N` is used as the
/// index directly, so that the output of [`super::format_pc`] parses back to
/// the same structure.
pub fn parse_pc(text: &str) -> Result<PathCondition, PcError> {
    parse_pc_named(text).map(|(pc, _)| pc)
}

/// [`parse_pc`] plus the source name of every variable index.
pub fn parse_pc_named(text: &str) -> Result<(PathCondition, BTreeMap<usize, String>), PcError> {
    let toks = tokenize(text).map_err(|e| PcError::Syntax {
        pos: e.pos,
        msg: e.msg,
    })?;
    let mut cur = Cursor::new(toks, text.len());
    let mut cmps = Vec::new();
    loop {
        cmps.push(parse_cmp(&mut cur)?);
        if cur.at_end() {
            break;
        }
        if !cur.eat(&Tok::AndAnd) {
            return Err(PcError::Syntax {
                pos: cur.pos(),
                msg: format!("expected `&&`, found {}", cur.describe_next()),
            });
        }
    }
    let (constraints, names) = lower(&cmps);
    Ok((PathCondition::new(constraints), names))
}

fn literal_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('v')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn lower(cmps: &[Cmp]) -> (Vec<LinearConstraint>, BTreeMap<usize, String>) {
    let names: Vec<&str> = cmps
        .iter()
        .flat_map(|c| c.lhs.var_names().into_iter().chain(c.rhs.var_names()))
        .collect();
    let literal = names.iter().all(|n| literal_index(n).is_some());
    let mut index: HashMap<String, usize> = HashMap::new();
    for n in names {
        let next = index.len();
        index.entry(n.to_string()).or_insert_with(|| {
            if literal {
                literal_index(n).unwrap()
            } else {
                next
            }
        });
    }
    let constraints = cmps
        .iter()
        .map(|c| {
            let lhs = c.lhs.to_lin(|n| index[n]);
            let rhs = c.rhs.to_lin(|n| index[n]);
            LinearConstraint::compare(&lhs, c.op, &rhs)
        })
        .collect();
    (constraints, index.into_iter().map(|(n, i)| (i, n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc::{format_pc, Op};
    use num_bigint::BigInt;

    #[test]
    fn three_variable_example() {
        let pc = parse_pc("x + y < z && x == z").unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc.vars().len(), 3);
        assert!(!pc.is_canonical());
        assert_eq!(format_pc(&pc), "1*v0 + 1*v1 + -1*v2 + 0 < 0 && 1*v0 + -1*v2 + 0 == 0");
    }

    #[test]
    fn identity_collapses() {
        let pc = parse_pc("x == x").unwrap();
        assert_eq!(pc.len(), 1);
        let c = &pc.constraints()[0];
        assert!(c.coeffs().is_empty());
        assert_eq!(c.constant(), &BigInt::from(0));
        assert_eq!(c.op(), Op::Eq);
    }

    #[test]
    fn nonlinear_rejected() {
        assert!(matches!(parse_pc("x*y > 0"), Err(PcError::Nonlinear { .. })));
        assert!(matches!(parse_pc("2*x*y > 0"), Err(PcError::Nonlinear { .. })));
        assert!(matches!(parse_pc("x^2 > 0"), Err(PcError::Nonlinear { .. })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_pc("x + < 3") {
            Err(PcError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_pc("x < 3 y > 2"), Err(PcError::Syntax { .. })));
        assert!(matches!(parse_pc(""), Err(PcError::Syntax { .. })));
        assert!(matches!(parse_pc("x # 3"), Err(PcError::Syntax { .. })));
    }

    #[test]
    fn negative_literals_and_subtraction() {
        let a = parse_pc("x - -5 <= 2").unwrap();
        let b = parse_pc("x + 5 <= 2").unwrap();
        assert_eq!(a.constraints(), b.constraints());
        let c = parse_pc("-1*x + y - 9 <= 0").unwrap();
        let d = parse_pc("-x + y - 9 <= 0").unwrap();
        assert_eq!(c.constraints(), d.constraints());
    }

    #[test]
    fn parenthesized_groups() {
        let a = parse_pc("(((2*x) + (3*y)) - (4*z)) + 1 <= 0").unwrap();
        let b = parse_pc("((2*x) + ((3*y) - (4*z))) + 1 <= 0").unwrap();
        let c = parse_pc("2*x + 3*y - 4*z + 1 <= 0").unwrap();
        assert_eq!(a.constraints(), c.constraints());
        assert_eq!(b.constraints(), c.constraints());
        let d = parse_pc("-(x - y) + 3*(y + 1) == 0").unwrap();
        let e = parse_pc("-1*x + 4*y + 3 == 0").unwrap();
        assert_eq!(d.constraints(), e.constraints());
        assert!(matches!(parse_pc("x*(y + 1) > 0"), Err(PcError::Nonlinear { .. })));
        assert!(matches!(parse_pc("(x + 1)*y > 0"), Err(PcError::Nonlinear { .. })));
        assert!(matches!(parse_pc("(x + 1 > 0"), Err(PcError::Syntax { .. })));
    }

    #[test]
    fn single_equals_is_equality() {
        let a = parse_pc("v0 - 5 = 0").unwrap();
        assert_eq!(a.constraints()[0].op(), Op::Eq);
    }

    #[test]
    fn literal_v_names_keep_their_index() {
        let pc = parse_pc("1*v3 + 0 <= 0 && 2*v1 + 1 == 0").unwrap();
        let vars: Vec<usize> = pc.vars().into_iter().collect();
        assert_eq!(vars, vec![1, 3]);
        // Mixed naming falls back to first appearance.
        let pc = parse_pc("v3 <= 0 && y == 1").unwrap();
        let vars: Vec<usize> = pc.vars().into_iter().collect();
        assert_eq!(vars, vec![0, 1]);
    }
}
