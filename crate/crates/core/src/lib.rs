//! Calibration of activity-based travel demand simulators with Bayesian
//! optimization.
//!
//! The surrogate is a random forest whose per-tree spread provides the
//! predictive standard deviation; new candidates are chosen by maximizing
//! Expected Improvement with a bound-constrained limited-memory quasi-Newton
//! routine. Simulator runs are scored by a product of OD-matrix, mode-share
//! and worker-coverage discrepancies.
//!
//! Data-parallel loops (tree fitting, multi-start acquisition, agent
//! simulation, independent runs) use rayon when the `parallel` feature is
//! enabled and fall back to plain iterators otherwise. Results never depend
//! on which path executed them.

pub mod acquisition;
pub mod engine;
pub mod error;
pub mod exec;
pub mod forest;
pub mod lbfgsb;
pub mod objective;
pub mod pareto;
pub mod rng;
pub mod simulators;
pub mod space;

pub use error::{Error, Result};
pub use exec::Execution;
