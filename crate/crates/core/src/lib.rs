//! Numerical laboratory for a pseudo-linear chaotic system in three
//! dimensions: eigenstructure, integration, return maps, continuation of
//! periodic points, unstable manifolds, control and synchronization.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod control;
pub mod equilibria;
pub mod error;
pub mod integrate;
pub mod lyapunov;
pub mod manifold;
pub mod pl_core;
pub mod poincare;

pub use error::{Error, Result};
pub use pl_core::{Param, State, SystemParams};
