//! Optimization layer for real-time bidding campaigns run through DSPs.
//!
//! The crate is organized around the three sub-routines that drive a campaign
//! every epoch, plus the machinery needed to back-test them:
//!
//! - [`partition`]: exponentiated-gradient budget repartition over media objects.
//! - [`bid`]: second-price bid landscape model and Nadam base-bid setter.
//! - [`pacing`]: total-budget correction toward an ideal spend profile.
//! - [`market`]: synthetic market simulator.
//! - [`baselines`]: comparison algorithms (`vnl`, `mab`, `lop`, `pst`).
//! - [`metrics`]: spend, clicks, CPC and rescaled KL divergence reporting.
//! - [`harness`]: closed-loop experiment runner with day parting and repetitions.
//! - [`state`] and [`preprocess`]: shared data model and missing-data filling.
//!
//! See the `examples/` directory of this crate for one runnable program per capability.

// Input checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bid;
pub mod error;
pub mod harness;
pub mod market;
pub mod metrics;
pub mod pacing;
pub mod partition;
pub mod preprocess;
pub mod state;

pub use error::{Error, Result};
pub use state::{CampaignConfig, EpochObservation, MediaObjectAccumulators, WeightVector};
