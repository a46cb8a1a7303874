//! Sparse Bayesian learning with covariance-free EM.
//!
//! The E-step of classic EM needs the posterior mean and the diagonal of the
//! posterior covariance. Here both are obtained from one batched
//! conjugate-gradient solve against the matrix-free precision operator
//! `beta * Phi^T Phi + diag(alpha)`: the mean from the right-hand side
//! `beta * Phi^T y`, the diagonal from Rademacher probes. The exact dense EM
//! is kept alongside as an oracle and timing baseline.

pub mod cofem;
pub mod em_exact;
pub mod error;
pub mod harness;
pub mod operators;
pub mod probe;
pub mod simulate;
pub mod solver;

pub use cofem::{
    cofem_e_step, cofem_m_step, cofem_run, CofemTrace, IterationRecord, PosteriorSummary,
    PrecisionState,
};
pub use em_exact::{em_exact_run, exact_posterior, log_evidence, ExactPosterior};
pub use error::{Result, SblError};
pub use operators::{DctUndersampled, DenseDictionary, Dictionary, GramOperator, LinearOperator};
pub use probe::{draw_probes, estimate_diagonal_general, estimate_diagonal_rademacher, ProbeBatch};
pub use solver::{cg_solve, CgReport, CgSettings};
