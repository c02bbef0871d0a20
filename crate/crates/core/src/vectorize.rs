//! Matrix encoding of canonized linear path conditions.
//!
//! Row `i` encodes constraint `i`: columns `0..t_max` hold the coefficients of
//! `v0..v{t_max-1}`, column `t_max` the constant term and column `t_max + 1`
//! the operator code (0 for `==`, 1 for `!=`, 2 for `<=`). An all-zero row is
//! the tautology `0 == 0`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::pc::PathCondition;

/// Largest absolute value a cell may hold.
pub const CELL_CAP: i64 = i32::MAX as i64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorizeError {
    #[error("path condition has {t} variables, matrix capacity is {t_max}")]
    TooManyVariables { t: usize, t_max: usize },
    #[error("value {0} exceeds the cell capacity")]
    CellOverflow(BigInt),
    #[error("path condition is not in normal form (operator {0})")]
    NotCanonical(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PcMatrix {
    rows: usize,
    t_max: usize,
    cells: Vec<i64>,
}

impl PcMatrix {
    /// Builds a matrix from row-major cells. `cells.len()` must be
    /// `rows * (t_max + 2)`.
    pub fn from_cells(rows: usize, t_max: usize, cells: Vec<i64>) -> Self {
        assert_eq!(cells.len(), rows * (t_max + 2), "cell count does not match shape");
        PcMatrix { rows, t_max, cells }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.t_max + 2
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn cells(&self) -> &[i64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.cells[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[i64] {
        let c = self.cols();
        &self.cells[row * c..(row + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Appends `extra` all-zero rows (each one is `0 == 0`).
    pub fn pad_rows(&self, extra: usize) -> PcMatrix {
        let mut cells = self.cells.clone();
        cells.resize(cells.len() + extra * self.cols(), 0);
        PcMatrix {
            rows: self.rows + extra,
            t_max: self.t_max,
            cells,
        }
    }

    /// Debug dump: tab-separated decimal cells, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join("\t"));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for PcMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn cell(v: &BigInt) -> Result<i64, VectorizeError> {
    v.to_i64()
        .filter(|x| x.abs() <= CELL_CAP)
        .ok_or_else(|| VectorizeError::CellOverflow(v.clone()))
}

/// Encodes a path condition in normal form as a `d x (t_max + 2)` matrix,
/// keeping the constraint order.
pub fn vectorize(pc: &PathCondition, t_max: usize) -> Result<PcMatrix, VectorizeError> {
    let cols = t_max + 2;
    let mut cells = vec![0i64; pc.len() * cols];
    if let Some(&max_var) = pc.vars().iter().next_back() {
        if max_var >= t_max {
            return Err(VectorizeError::TooManyVariables {
                t: max_var + 1,
                t_max,
            });
        }
    }
    for (i, c) in pc.constraints().iter().enumerate() {
        let code = c
            .op()
            .code()
            .ok_or_else(|| VectorizeError::NotCanonical(c.op().to_string()))?;
        let row = &mut cells[i * cols..(i + 1) * cols];
        for (&v, k) in c.coeffs() {
            row[v] = cell(k)?;
        }
        row[t_max] = cell(c.constant())?;
        row[t_max + 1] = code;
    }
    Ok(PcMatrix {
        rows: pc.len(),
        t_max,
        cells,
    })
}

/// Byte key identifying a matrix: shape header followed by the cells in
/// little-endian order. Equal matrices give equal keys and distinct matrices
/// give distinct keys.
pub fn matrix_key(m: &PcMatrix) -> Vec<u8> {
    let mut key = Vec::with_capacity(16 + m.cells.len() * 8);
    key.extend_from_slice(&(m.rows as u64).to_le_bytes());
    key.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in &m.cells {
        key.extend_from_slice(&v.to_le_bytes());
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pc::{canonize, parse_pc};

    const REFERENCE_PC: &str = "x + y - z + 1 <= 0 && x - z == 0 && -1*x + y - 9 <= 0";

    #[test]
    fn reference_matrix_3x5() {
        let m = vectorize(&parse_pc(REFERENCE_PC).unwrap(), 3).unwrap();
        assert_eq!(
            m.to_rows(),
            vec![vec![1, 1, -1, 1, 2], vec![1, 0, -1, 0, 0], vec![-1, 1, 0, -9, 2]]
        );
    }

    #[test]
    fn reference_matrix_3x6() {
        let m = vectorize(&parse_pc(REFERENCE_PC).unwrap(), 4).unwrap();
        assert_eq!(
            m.to_rows(),
            vec![
                vec![1, 1, -1, 0, 1, 2],
                vec![1, 0, -1, 0, 0, 0],
                vec![-1, 1, 0, 0, -9, 2]
            ]
        );
    }

    #[test]
    fn tautology_is_zero_row() {
        let pc = canonize(&parse_pc("0 == 0").unwrap());
        let m = vectorize(&pc, 3).unwrap();
        assert_eq!(m.to_rows(), vec![vec![0, 0, 0, 0, 0]]);
    }

    #[test]
    fn errors() {
        let pc = parse_pc("a + b + c + d <= 0").unwrap();
        assert_eq!(
            vectorize(&pc, 3),
            Err(VectorizeError::TooManyVariables { t: 4, t_max: 3 })
        );
        let pc = parse_pc("x < 3").unwrap();
        assert!(matches!(vectorize(&pc, 3), Err(VectorizeError::NotCanonical(_))));
        let pc = parse_pc("x - 2147483648 <= 0").unwrap();
        assert!(matches!(vectorize(&pc, 3), Err(VectorizeError::CellOverflow(_))));
        let pc = parse_pc("x - 2147483647 <= 0").unwrap();
        assert!(vectorize(&pc, 3).is_ok());
    }

    #[test]
    fn key_detects_every_single_cell_change() {
        let m = vectorize(&parse_pc(REFERENCE_PC).unwrap(), 3).unwrap();
        let base = matrix_key(&m);
        assert_eq!(base, matrix_key(&m.clone()));
        for i in 0..m.cells().len() {
            for delta in [-1i64, 1] {
                let mut cells = m.cells().to_vec();
                cells[i] += delta;
                let flipped = PcMatrix::from_cells(m.rows(), m.t_max(), cells);
                assert_ne!(matrix_key(&flipped), base, "cell {i} delta {delta}");
            }
        }
    }

    #[test]
    fn text_dump() {
        let m = vectorize(&parse_pc("x - 1 <= 0").unwrap(), 2).unwrap();
        assert_eq!(m.to_text(), "1\t0\t-1\t2\n");
    }

    #[test]
    fn padding_appends_zero_rows() {
        let m = vectorize(&parse_pc("x - 1 <= 0").unwrap(), 2).unwrap();
        let p = m.pad_rows(2);
        assert_eq!(p.rows(), 3);
        assert_eq!(p.row(2), &[0, 0, 0, 0]);
    }
}
