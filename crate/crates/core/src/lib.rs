//! Numerical laboratory for the conformal Einstein-Dirac flow on a flat spin
//! 3-torus: spectral fields, the Dirac eigenvalue pencil `Dψ = λ u^{p1} ψ`,
//! eigenpair perturbation, a nonlocal linear parabolic solver and the coupled
//! flow integrator.

pub mod conformal;
pub mod dirac;
pub mod error;
pub mod flow;
pub mod krylov;
pub mod parabolic;
pub mod pencil;
pub mod perturbation;
pub mod torus;

pub use error::{Error, Result};
