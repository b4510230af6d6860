//! Numerical laboratory for a clamped von Karman plate in subsonic potential flow.
//!
//! The plate is advanced with a delayed reduced equation that replaces the
//! flow by a memory term; the flow itself can be reconstructed afterwards from
//! the stored plate history by a Kirchhoff-type formula.

// `!(x > 0.0)` guards double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod flow;
pub mod history;
pub mod linalg;
pub mod microlocal;
pub mod memory;
pub mod quadrature;
pub mod stationary;
pub mod vonkarman;

pub use error::{Error, Result};
pub use fields::{l2_inner, PlateGrid, ScalarField, SecondDerivatives};
pub use history::{HistoryBuffer, Snapshot, SpinUp};
