//! Holomorphic semiflows on the unit disc, their cocycles, weighted
//! composition semigroups and Bloch-space continuity experiments.

pub mod analytic;
pub mod blaschke;
pub mod cocycle;
pub mod continuity;
pub mod error;
pub mod extrapolate;
pub mod flow;
mod ode;
pub mod quadrature;

pub use analytic::{AnalyticFn, GridSpec, Guard, TaylorSeries};
pub use blaschke::BlaschkeProduct;
pub use cocycle::{WeightSpec, WeightedSemigroup};
pub use error::{Error, Result};
pub use flow::{ConformalMap, FlowModel, KoenigsMode};
pub use num_complex::Complex64;
