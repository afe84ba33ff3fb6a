//! Order-condition machinery and integrators for nonlinearly partitioned
//! Runge-Kutta (NPRK) methods.
//!
//! An NPRK method advances `y' = F(y, ..., y)`, where the right-hand side
//! takes `M` copies of the state and each argument can be treated with its
//! own level of implicitness. Coefficients form a rank-`M+1` tensor `a` and a
//! rank-`M` tensor `b` instead of the classical Butcher matrix and weight
//! vector. The crate provides:
//!
//! - [`tree`]: edge-colored rooted trees, canonical forms, enumeration, and
//!   the combinatorial quantities (density, symmetry factor) behind order
//!   conditions;
//! - [`tableau`]: NPRK/RK/ARK tableau types, underlying-method extraction,
//!   ARK-to-NPRK conversion, and built-in methods;
//! - [`conditions`]: elementary weights, order-condition sets, order
//!   verification, and symbolic rendering;
//! - [`integrator`]: a step/trajectory engine for arbitrary NPRK tableaux
//!   with implicit-stage Newton solves and embedded difference estimates;
//! - [`harness`]: canonical test problems, convergence studies, coupling
//!   scans, and witness systems that isolate a single tree's contribution.
//!
//! See the `book/` directory for a guided tour; its code snippets run as
//! doctests of this crate.

// Negated float comparisons below are deliberate: `!(x > 0.0)` rejects NaN
// along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod sampling;
pub mod tableau;
pub mod tree;

/// The book's code blocks double as doctests; each chapter becomes a module
/// so a failure names its origin.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/tableaux.md")]
    mod tableaux {}
    #[doc = include_str!("../../../book/src/integration.md")]
    mod integration {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

pub use conditions::{
    condition_set, condition_set_capped, conditions_at_order, elementary_weight,
    elementary_weight_naive, render_condition, render_condition_latex, verify_order,
    ConditionReport, OrderVerdict, DEFAULT_ORDER_TOL, NAIVE_ITERATION_BUDGET,
};
pub use error::{Error, Result};
pub use harness::{
    burgers, convergence_study, coupling_scan, default_alpha_grid, log_log_fit, lotka_volterra,
    witness_ode, witness_prediction, witness_taylor_coefficient, Burgers, ConvergenceResult,
    CouplingPoint, LotkaVolterra, Reference, ReferenceCache, WitnessOde, COUPLING_H_VALUES,
    WITNESS_H_VALUES,
};
pub use integrator::{
    embedded_diff, integrate, solve_stages, stage_coupling, stage_equation_residual, step,
    step_with_stages, FnOde, PartitionedOde, StageCoupling, StageSolverConfig, StepStats,
    Trajectory,
};
pub use tableau::{
    ark_to_nprk, builtin, lobatto_iiia_iiib, method1, method2, nprk_euler_implicit_explicit,
    ArkPair, BWeightMode, Builtin, NprkTableau, RkTableau, ValidationReport, BUILTIN_NAMES,
    TABLEAU_TOL,
};
pub use tree::{
    count_ark_conditions, count_conditions, count_conditions_capped, generate_trees,
    generate_trees_capped, ColoredTree, ConditionClass, ConditionCounts, DEFAULT_TREE_CAP,
};
