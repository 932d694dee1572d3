//! Numerical laboratory for generalized Dyson Brownian motion.
//!
//! The crate simulates the interacting particle system
//!
//! ```text
//! dλⁱ = √(2/(βN)) dWⁱ + (1/N) Σ_{j≠i} dt/(λⁱ − λʲ) − ½ V'(λⁱ) dt
//! ```
//!
//! solves its mean-field limit `∂_t ρ = ∂_x(ρ (V'/2 − Hρ))` by finite volumes,
//! and checks the gradient-flow structure of that limit (entropy
//! dissipation, Wasserstein contraction, HWI, convergence to the
//! equilibrium measure) against the particle system and a Hermitian matrix
//! diffusion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod freecalc;
pub mod matrix_oracle;
pub mod measures;
pub mod pde;
pub mod potentials;
pub mod quadrature;
pub mod run;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
