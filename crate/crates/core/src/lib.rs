//! Photon-number statistics of multimode thermal light after conditional
//! multiphoton subtraction.
//!
//! - [`distributions`]: closed-form laws, moments and dark-count convolution.
//! - [`series`]: truncated probability generating functions.
//! - [`simulator`]: beam-splitter Monte Carlo and synthetic detector traces.
//! - [`pipeline`]: binning, grouping, conditioning and goodness-of-fit.
//! - [`cli`]: the `subthermal` command-line front end.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod simulator;

pub use distributions::{Moments, Pmf, SubtractionConfig};
pub use error::{Error, Result};
