//! Global model updating for shear-frame structures.
//!
//! The modal dynamic residual objective is a polynomial in the stiffness
//! updating variables and the unmeasured mode-shape entries. This crate
//! relaxes that polynomial program into a sum-of-squares semidefinite program,
//! solves the primal/dual pair with an embedded interior-point method, reads
//! the minimizer off the moment vector and certifies it. Local Gauss-Newton
//! and trust-region baselines plus a seeded multistart harness are included
//! for comparison.

pub mod polynomial;
pub mod sdp;
pub mod relaxation;
pub mod structural;
pub mod local;
