mod common;

use common::arb_pc;
use num_bigint::BigInt;
use pcsat::{canonize, matrix_key, solve, vectorize, LinExpr, LinearConstraint, Op, PathCondition, PcMatrix};
use proptest::prelude::*;

/// Reads a matrix back as a path condition, one constraint per row.
fn decode(m: &PcMatrix) -> PathCondition {
    let t = m.t_max();
    PathCondition::new(
        (0..m.rows())
            .map(|i| {
                let row = m.row(i);
                let coeffs = (0..t).map(|v| (v, BigInt::from(row[v])));
                let op = Op::from_code(row[t + 1]).expect("op column holds a canonical code");
                LinearConstraint::new(LinExpr::from_parts(coeffs, BigInt::from(row[t])), op)
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn shape_and_op_column(pc in arb_pc(4, 6, 9), extra in 0usize..3) {
        let canon = canonize(&pc);
        let m = vectorize(&canon, 4 + extra).unwrap();
        prop_assert_eq!((m.rows(), m.cols()), (canon.len(), 6 + extra));
        for i in 0..m.rows() {
            prop_assert!((0..=2).contains(&m.get(i, m.cols() - 1)));
            for v in canon.vars().len()..4 + extra {
                prop_assert_eq!(m.get(i, v), 0);
            }
        }
    }

    #[test]
    fn decode_then_canonize_revectorizes_identically(pc in arb_pc(4, 6, 9)) {
        let m = vectorize(&canonize(&pc), 4).unwrap();
        let back = decode(&m);
        prop_assert_eq!(vectorize(&canonize(&back), 4).unwrap(), m);
    }

    #[test]
    fn zero_row_padding_keeps_the_verdict(pc in arb_pc(3, 5, 9), r in 1usize..=5) {
        let m = vectorize(&canonize(&pc), 3).unwrap();
        let padded = decode(&m.pad_rows(r));
        prop_assert_eq!(padded.len(), m.rows() + r);
        prop_assert_eq!(solve(&padded).unwrap().is_sat(), solve(&decode(&m)).unwrap().is_sat());
    }

    #[test]
    fn extra_columns_keep_the_verdict(pc in arb_pc(3, 5, 9), c in 1usize..=4) {
        let canon = canonize(&pc);
        let narrow = decode(&vectorize(&canon, 3).unwrap());
        let wide = decode(&vectorize(&canon, 3 + c).unwrap());
        prop_assert_eq!(solve(&narrow).unwrap().is_sat(), solve(&wide).unwrap().is_sat());
    }

    #[test]
    fn keys_agree_with_matrix_equality(a in arb_pc(3, 3, 2), b in arb_pc(3, 3, 2)) {
        let (ma, mb) = (vectorize(&canonize(&a), 3).unwrap(), vectorize(&canonize(&b), 3).unwrap());
        prop_assert_eq!(matrix_key(&ma) == matrix_key(&mb), ma == mb);
    }
}
