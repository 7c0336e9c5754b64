//! Guided modes, outgoing Green's functions, scattering solves and radiation
//! certificates for the 2-D Helmholtz equation in a stratified medium.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod csv;
pub mod error;
pub mod farfield;
pub mod fields;
pub mod geometry;
pub mod green;
pub mod modes;
pub mod operator;
pub mod pipeline;
pub mod probe;
pub mod profile;
pub mod quadrature;
pub mod radcheck;
pub mod representation;
pub mod scatter;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
