//! Mean-field-game formulations of generative models at desk scale.
//!
//! The crate implements and cross-verifies score-based generative models
//! with Hamilton-Jacobi-Bellman regularization, PINN-style score matching,
//! optimal-transport normalizing flows, Boltzmann-generator variants, and
//! Langevin (Wasserstein-gradient-flow) samplers, together with a 1-D PDE
//! suite that numerically certifies the underlying optimality conditions.
//!
//! Time convention, binding everywhere: the noising time is `s in [0, T]`
//! with the data distribution at `s = 0`; generation time is `t = T - s`;
//! score networks are always indexed by noising time.

pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod targets;

pub use error::{Error, Result};
