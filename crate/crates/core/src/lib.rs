//! Hierarchical tokenization, compilation and evaluation of sketch-extrude
//! CAD programs.

// NaN-rejecting `!(x > 0.0)` guards and index loops over parallel arrays
// are used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod align;
pub mod cadprog;
pub mod canonize;
pub mod diffusion;
pub mod error;
pub mod geom;
pub mod geom2d;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod pointops;
pub mod spatial;
pub mod vq;

pub use error::{Error, Result};
pub use par::Execution;

pub type V3 = nalgebra::Vector3<f64>;
