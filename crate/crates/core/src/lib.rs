//! Satisfiability of linear integer path conditions: canonization,
//! vectorization, an exact branch-and-bound solver, per-constraint-count
//! neural classifiers, and a symbolic executor that uses the classifiers with
//! solver fallbacks that never lose a feasible path.

pub mod bank;
pub mod cache;
pub mod dataset;
pub mod dnn;
pub mod expr;
mod lex;
pub mod pc;
pub mod solver;
pub mod symexec;
pub mod vectorize;

pub use pc::{
    canonize, dimension_of, format_pc, parse_pc, parse_pc_named, LinExpr, LinearConstraint, Op, PathCondition,
    PcDimension, PcError,
};
pub use vectorize::{matrix_key, vectorize, PcMatrix, VectorizeError};
pub use solver::{brute_force_solve, solve, SolveError, Solver, Verdict};
