//! Simulation toolkit for slow-fast systems driven by Z-extensions of
//! chaotic maps.
//!
//! The library models the fast dynamics as a skew product
//! `T(w, m) = (Tbar(w), m + phi(w))` over a probability-preserving base
//! map with an integer-valued, centered step function `phi`. Two base
//! systems ship with the crate:
//!
//! * [`shift::DyadicShift`] — an exact bit-stream realization of the
//!   doubling map with a `+/-1` step function, together with exact
//!   cylinder-enumeration oracles for correlation sums;
//! * [`billiard`] — the finite-horizon Z-periodic Lorentz gas: a planar
//!   collision map with periodic circular scatterers on the cylinder,
//!   its invariant-measure sampler and a finite-horizon validator.
//!
//! On top of these, [`slowfast`] integrates the perturbed and averaged
//! differential equations and their perturbed Birkhoff sums,
//! [`greenkubo`] estimates asymptotic-variance (Green-Kubo) matrices and
//! the step-cocycle variance, [`limit`] simulates the Brownian
//! local-time machinery of the limiting error process, and [`stats`]
//! provides the statistical harness (moments, Kolmogorov-Smirnov
//! distances, bootstrap intervals, scaling regressions) used by the
//! convergence experiments.

pub mod billiard;
pub mod field;
pub mod greenkubo;
pub mod limit;
pub mod rng;
pub mod shift;
pub mod slowfast;
pub mod stats;
pub mod zext;

pub use field::{DrivenField, ProductField};
pub use slowfast::TrajectoryGrid;
pub use zext::{BaseSystem, StepError, ZPoint};
