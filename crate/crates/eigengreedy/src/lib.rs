//! Certified reduced-order models for the smallest eigenpair of large
//! parametric Hermitian matrix families.
//!
//! The toolkit builds, via a two-stage greedy strategy, small subspaces that
//! approximate the spectral gap and the ground eigenspace of an affine family
//! `A(mu) = sum_q theta_q(mu) A_q` over a parameter grid, together with
//! rigorously computable upper/lower eigenvalue bounds, gap bounds, and an a
//! posteriori estimator for the eigenspace projection error.

pub mod affine;
pub mod cli;
pub mod eigensolve;
pub mod gap_cert;
pub mod generators;
pub mod greedy;
pub mod lowerbounds;
pub mod scalar;
pub mod subspace;

pub use scalar::{c, CMatrix, CVector, Cx, RMatrix, RVector, Scalar};

/// Default real scalar used by the CLI and file formats.
pub type Real = f64;
/// Default complex scalar.
pub type Complex64 = Cx<f64>;
