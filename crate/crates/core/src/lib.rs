//! Random walks whose increment law is chosen by the average of their most
//! recent `N` steps.
//!
//! The crate is split the same way the workflow is:
//!
//! * [`distributions`] holds the increment laws (Gaussian, Rademacher, finite
//!   discrete) with exact means, cumulant generating functions and tails.
//! * [`ratefn`] computes Legendre-Fenchel rate functions and Cramér tail slopes.
//! * [`theory`] validates a [`ModelSpec`] and produces every closed-form
//!   exponent prediction, including the limiting speed as `N` grows.
//! * [`simulator`] runs the delayed and instantaneous walks exactly, plus
//!   samplers for block variables and regime exit times.
//! * [`experiments`] confronts Monte Carlo estimates with the predictions.

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod extended;
pub mod ratefn;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod theory;

pub use distributions::{Direction, IncrementDistribution, Side};
pub use error::{Error, Result};
pub use extended::ExtendedReal;
pub use ratefn::RateFunction;
pub use rng::RandomStream;
pub use simulator::{Version, WalkState};
pub use stats::SlopeFit;
pub use theory::{ModelSpec, TheoryReport, ValidationReport};
