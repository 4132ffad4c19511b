//! Structure-preserving integrators built from retraction and discretization maps.
//!
//! The crate covers symplectic steps on `T*R^n`, Lie-Poisson steps on duals of
//! Lie algebras, Poisson steps on action-algebroid duals (heavy top), composition
//! methods, and a verification harness for the invariants these maps preserve.

#![allow(clippy::type_complexity, clippy::neg_cmp_op_on_partial_ord)]

pub mod actiongroupoid;
pub mod algebra;
pub mod cli;
pub mod compose;
pub mod error;
pub mod liepoisson;
pub mod retractions;
pub mod solver;
pub mod symplectic;
pub mod verify;

pub use error::{GeoError, Result};
