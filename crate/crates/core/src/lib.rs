//! Isogeometric mortar methods for second-order elliptic problems on
//! two-patch NURBS domains.
//!
//! The pipeline runs from univariate splines ([`spline`]) through patch
//! geometry ([`geometry`]), domain decomposition ([`multipatch`]) and
//! interface quadrature ([`quadrature`]) to the saddle-point system
//! ([`assembly`]), its solution ([`solver`]), error measurement
//! ([`analysis`]) and convergence studies ([`experiments`]).

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod multipatch;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod spline;

pub use error::{Error, Result};
