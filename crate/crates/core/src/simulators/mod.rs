//! Evaluation boundary: the built-in toy activity-based simulator, an
//! adapter for external simulator processes, and analytic benchmarks.

pub mod benchmark;
pub mod external;
pub mod files;
pub mod schedule;
pub mod toy;

use crate::error::Result;
use crate::objective::SimulationSummary;
use crate::space::ParameterVector;

pub use benchmark::{BenchmarkKind, BenchmarkProblem};
pub use external::{ExternalSimulator, ExternalSimulatorConfig};
pub use schedule::{ScheduleRow, StopType, TourType};
pub use toy::{logit_choice, toy_simulate, BetaLayout, ToyScenario, ToyScenarioConfig, ToySimulator};

/// Anything that maps a parameter vector to simulated aggregate outputs.
pub trait Simulator: Send + Sync {
    fn simulate(&self, theta: &ParameterVector) -> Result<SimulationSummary>;
}
