//! Accelerated third-order tensor method for structured convex quartics
//! `f(x) = cᵀx + xᵀGx + T[x,x,x] + (1/24)‖Ax‖₄⁴`, including ℓ4-regression.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aux_min;
pub mod design;
pub mod error;
pub mod fast_quartic;
pub mod harness;
pub mod metric;
pub mod par;
pub mod quartic;
pub mod rho_search;
pub mod tensor;

pub use error::{Error, Result};
