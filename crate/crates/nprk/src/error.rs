//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by tree construction, tableau handling, condition
/// evaluation, and the integrator.
#[derive(Debug, Error)]
pub enum Error {
    /// A level or color sequence does not describe a rooted tree.
    #[error("invalid tree: {reason} (index {index})")]
    InvalidTree { reason: String, index: usize },

    /// A precondition on user input was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// Tree colors and tableau partitions disagree.
    #[error("partition mismatch: tree uses {tree_colors} colors but tableau has M = {tableau_m}")]
    PartitionMismatch { tree_colors: usize, tableau_m: usize },

    /// A generation or summation request exceeded the configured budget.
    #[error("budget exceeded: estimated work {estimated} exceeds cap {cap}")]
    BudgetExceeded { estimated: u128, cap: u128 },

    /// The literal full-index summation would be astronomically large.
    #[error(
        "naive summation budget exceeded: {iterations} full-index iterations needed          (cap {cap}); use the contracted elementary-weight route instead"
    )]
    NaiveBudgetExceeded { iterations: u128, cap: u128 },

    /// An exact integer computation overflowed its fixed-width carrier.
    #[error("integer overflow in {0}; reduce the order or partition count")]
    Overflow(&'static str),

    /// A nonlinear stage solve did not reach the requested tolerance.
    #[error(
        "stage solver did not converge: residual {residual:.3e} after {iterations} iterations \
         ({context})"
    )]
    SolverFailed {
        residual: f64,
        iterations: usize,
        context: String,
    },

    /// A non-finite value appeared during integration.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// Lookup of a built-in method failed.
    #[error("unknown built-in method `{name}`; available: {available}")]
    UnknownBuiltin { name: String, available: String },
}

pub type Result<T> = std::result::Result<T, Error>;
