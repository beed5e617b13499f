//! Design-based estimation for cluster-randomized experiments in which
//! clusters are drawn with probability proportional to size, without
//! replacement.
//!
//! The crate is organised as a pipeline:
//!
//! * [`population`] holds the finite potential-outcome table.
//! * [`design`] draws cluster samples and within-cluster unit samples, and
//!   computes inclusion probabilities.
//! * [`assignment`] randomises treatment over the sampled clusters.
//! * [`estimators`] turns one [`estimators::Realization`] into point estimates.
//! * [`variance`] holds exact variance oracles and the data-driven estimators.
//! * [`montecarlo`] replicates the pipeline, enumerates small designs
//!   exactly, and summarises the results.

pub mod assignment;
pub mod cli;
pub mod design;
pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod par;
pub mod population;
pub mod variance;

pub use error::{Error, Result};
pub use population::{Arm, Cluster, Population, Unit};
