//! Dense linear algebra, linear feasibility and seeded sampling.

pub mod linalg;
pub mod lp;
pub mod matrix;
pub mod prng;

pub use linalg::{
    nullspace_vector, nullspace_vector_with_tol, rank, rank_of_rows, singular_values,
    smallest_singular_value, DEFAULT_RANK_TOL,
};
pub use lp::{
    linear_feasibility, FeasibilityResult, LinearConstraint, LinearSystem, DELTA_STRICT, TAU_FEAS,
};
pub use matrix::{distance, dot, fmt_f64, norm, relu, IndexSet, Matrix};
pub use prng::{sample_gaussian_matrix, sample_orthogonal, Prng, PrngKey};
