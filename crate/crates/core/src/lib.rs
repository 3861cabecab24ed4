//! Cubic stochastic processes: three-parent transition laws on finite state
//! spaces and on the real line.
//!
//! The finite-state side covers cubic stochastic tensors, deterministic and
//! sampled evolution of distributions, two-parameter transition families,
//! generator estimation and unit-delay differential equations. The
//! continuous side ([`kernel`]) covers transition densities, quadrature-based
//! measure evolution and residual checks of the associated integral and
//! differential equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dde;
pub mod dynamics;
pub mod error;
pub mod family;
pub mod generator;
pub mod kernel;
pub mod limits;
pub mod quadrature;
pub mod simplex;
pub mod tensor;

pub use dynamics::{iterate, monte_carlo_trajectory, Trajectory};
pub use error::{Error, Result};
pub use family::{
    contraction_identity_residual, example1_family, fundamental_residual,
    neutral_inheritance_family, uniform_family, verify_conditions, BoundFamily, ClosedFormFamily,
    Condition, ConditionReport, TransitionFamily, TransitionLaw,
};
pub use generator::{estimate_generator, GeneratorTensor};
pub use limits::{Convergence, ConvergenceStatus, DEFAULT_DELTAS};
pub use simplex::{SimplexVector, DEFAULT_TOL};
pub use tensor::{evolve, symmetrize_tensor, validate_tensor, CubicTensor, ValidationReport};
