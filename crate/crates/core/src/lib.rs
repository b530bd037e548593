//! Precision bounds for quantum parameter estimation with nuisance parameters.
//!
//! The crate is `no_std` (it needs `alloc`) and covers:
//!
//! - parametric families of full-rank density matrices and finite classical models ([`model`], [`classical`]),
//! - symmetric and right logarithmic derivatives, quantum Fisher matrices and the commutation
//!   operator ([`qfisher`]),
//! - partial Fisher information, effective SLDs and parameter orthogonalization ([`nuisance`]),
//! - SLD, RLD, Holevo and Nagaoka/Gill–Massar bounds ([`bounds`], [`holevo`]),
//! - model classification ([`classify`]),
//! - POVMs, optimal projection measurements, locally unbiased estimators and Monte-Carlo
//!   simulation of repetitive and two-step adaptive strategies ([`measurement`]).
//!
//! Parameters are always ordered with the parameters of interest first; a [`Partition`]
//! records how many there are.
//!
//! ```
//! use qnuis_core::bounds::{self, BoundOptions};
//! use qnuis_core::model::{zoo_build, ZooConfig};
//! use qnuis_core::qfisher::LocalGeometry;
//! use qnuis_core::{Partition, WeightMatrix};
//!
//! # fn main() -> Result<(), qnuis_core::Error> {
//! let model = zoo_build("bloch-qubit", &ZooConfig::default())?;
//! let geom = LocalGeometry::at(&model, &[0.3, 0.4, 0.5])?;
//! let part = Partition::new(2, 3)?;
//! let w = WeightMatrix::identity(2);
//! let holevo = bounds::holevo_in(&geom, &part, &w, &BoundOptions::default())?;
//! assert!((holevo.value - 2.75).abs() < 1e-6);
//! # Ok(())
//! # }
//! ```

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bounds;
pub mod classical;
pub mod classify;
mod error;
pub mod holevo;
pub mod linalg;
pub(crate) mod math;
pub mod measurement;
pub mod model;
pub mod nuisance;
pub mod qfisher;

pub use error::{Error, Result};
pub use linalg::{CMat, RMat};
pub use model::{Partition, StateModel, WeightMatrix};
pub use nalgebra::Complex;

/// Complex double used throughout.
pub type C64 = Complex<f64>;
