//! Micro-macro simulation toolkit for benthic-algae population dynamics.
//!
//! The microscopic model is a superposition of M reversible spin processes
//! with heterogeneous decay rates drawn from a gamma-type measure; its
//! continuum limit is an integro-differential population model whose
//! decay-only solution is the long-memory curve (1 + beta t)^{-alpha}.
//! This crate simulates both levels, verifies their convergence, locates
//! rate-induced tipping thresholds, and calibrates the decay law to
//! covering-ratio data.
//!
//! All rates are per hour and all times are hours unless a constructor says
//! otherwise ([`micro::SimConfig::in_days`] converts).
//!
//! Ensembles and sweeps run on rayon when the default `parallel` feature is
//! enabled; results are identical for any worker count, and identical to
//! the sequential fallback.

// `!(x > 0.0)` in validation guards deliberately rejects NaN along with the
// out-of-range values; `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibrate;
pub mod error;
pub mod growth;
pub mod macro_ide;
pub mod micro;
mod numeric;
mod par;
pub mod rate_measure;
pub mod series;

pub use error::{Error, Result};
pub use growth::{logistic_closed_form, GrowthKind, GrowthSpec, ScheduleDirection, TimeSchedule};
pub use micro::{
    decay_mean_variance, ensemble, ensemble_serial, simulate_path, EnsembleSummary, HazardForm,
    MicroState, SimConfig, TimeUnit,
};
pub use numeric::derive_seed;
pub use rate_measure::{cdf_gap, tv_distance, QuantileLift, RateMeasure};
pub use series::PathSeries;
