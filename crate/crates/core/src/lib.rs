//! Extended Krichever Lax differential and its classical r-matrix on the
//! elliptic curve ℂ/{1, τ}, together with numerical certification of the
//! identities they satisfy.

// Threshold tests are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod lax;
pub mod linalg;
pub mod phase_space;
pub mod poisson;
pub mod quadrature;
pub mod reduction;
pub mod report;
pub mod rmatrix;
pub mod scalar;
pub mod solver;
pub mod suites;
pub mod theta;

pub use error::{Error, Result};
pub use scalar::{Dual, Scalar, C64};
