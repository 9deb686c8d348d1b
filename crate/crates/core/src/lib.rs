//! Finite-element solver and optimal-control toolkit for a tumor–oxygen
//! chemotaxis model.
//!
//! The pipeline: build a [`mesh::Mesh`], wrap it in a [`fem::FemSpace`],
//! integrate the state forward with [`state::run_state`], the adjoint
//! backward with [`adjoint::run_adjoint`], form the reduced gradient and
//! minimise the therapy cost with [`optimizer::optimize`].

pub mod adjoint;
pub mod control;
pub mod cost;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod optimizer;
pub mod sensitivity;
pub mod state;
pub mod time;
pub mod verification;

pub use error::{Error, Result};
