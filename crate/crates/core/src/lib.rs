//! D-optimal experimental design on implicitly specified response-surface
//! design matrices.
//!
//! The design matrix of a full linear or quadratic response-surface model in
//! `F` factors at `L` levels has `L^F` rows, far too many to list. Every
//! algorithm here touches rows only through [`instance::ModelSpec`] (row
//! expansion and the index codec) and through the pricing [`oracle`], which
//! maximizes a quadratic form over all implicit rows without storing them.
//!
//! - [`infomat`]: Cholesky-factored information matrix with rank-one
//!   update/downdate.
//! - [`localsearch`]: exchange local search whose entering rows are generated
//!   by the oracle.
//! - [`relax`]: continuous relaxation over a row pool, closed-form dual
//!   certificates and the row-generation loop.
//! - [`bnb`]: desk-scale exact branch-and-bound.
//! - [`reference`]: dense brute-force answers for cross-checking.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. The `parallel` feature spreads oracle sweeps and exchange scans
//! over a rayon pool; results are bit-identical for any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bnb;
pub mod error;
pub mod infomat;
pub mod instance;
pub mod linalg;
pub mod localsearch;
pub mod oracle;
pub mod reference;
pub mod relax;

mod math;

pub use error::{Error, Result};
pub use infomat::{InfoMatrix, EPS_PSD};
pub use instance::{Design, FactorPoint, ModelKind, ModelSpec, RowVector};
pub use linalg::DenseMatrix;
