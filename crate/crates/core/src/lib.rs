//! Invariant graphs, Lyapunov exponents, pinching diagnostics and
//! saddle-node bifurcation parameters of forced monotone interval maps
//! `(θ, x) ↦ (ω(θ), f_{β,θ}(x))`.
//!
//! * [`base`]: invertible base transformations `ω`.
//! * [`fibre`]: monotone fibre-map families and the region `Γ`.
//! * [`graph`]: bounding invariant graphs by orbit pullback, Lyapunov
//!   exponents, pinching, bounded-orbit sets and contraction.
//! * [`bifurcation`]: bisection for the critical parameters and sweeps.
//! * [`oracle`]: independent one-dimensional saddle-node computations.
//! * [`flow`]: time-`t₀` maps of forced scalar ODEs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod bifurcation;
pub mod error;
pub mod fibre;
pub mod flow;
pub mod graph;
pub mod oracle;
pub mod samples;

pub use base::{BasePoint, BaseSystem, Direction};
pub use error::{Error, Result};
pub use fibre::{FibreFamily, FibreMap, GammaBoundary, Orientation};
pub use graph::{GraphEngine, GraphField, GraphPoint, IntervalField, PinchingReport, Which};
