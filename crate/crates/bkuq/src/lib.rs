//! Numerics laboratory for the linearized Boltzmann equation with an
//! uncertain hard-sphere collision kernel.
//!
//! The library discretizes the linearized collision operator L = -ν + K on an
//! axisymmetric velocity grid, Fourier-transforms the whole-space transport
//! problem ∂_t g + ξ·∇_x g = L g into a family of mode problems
//! ∂_t ĝ = (-i ξ·η + L) ĝ, and studies
//!
//! * the dispersion relations of the fluid branches near η = 0,
//! * the spectral gap away from the fluid modes,
//! * polynomial time-decay of solutions and of their derivatives with
//!   respect to an uncertainty parameter z entering the collision kernel,
//! * the stochastic-Galerkin (generalized polynomial chaos) approximation of
//!   the z-dependent problem: decay of its blocks, coercivity estimates for
//!   the coupled system, and spectral convergence in the chaos order.

pub mod assemble;
pub mod cache;
pub mod error;
pub mod evolve;
pub mod gamma;
pub mod gpc;
pub mod grid;
pub mod kernel;
pub mod lapack;
pub mod model;
pub mod norms;
pub mod operator;
pub mod quad;
pub mod sg;
pub mod symbol;

pub use error::{Error, Result};
