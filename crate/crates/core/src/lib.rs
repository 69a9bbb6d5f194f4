//! Persistence probabilities for the running sign-sum of one-dimensional
//! zero-mean random walks.

pub mod barrier;
pub mod experiments;
pub mod exponent;
pub mod increments;
pub mod montecarlo;
pub mod oracle;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod stable;
pub mod walk;

pub use barrier::{Barrier, Mode};
pub use increments::{IncrementDistribution, IncrementError, IncrementSampler};
pub use rng::{Domain, RandomStream, StreamFactory};
