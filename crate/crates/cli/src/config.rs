//! The TOML configuration file. Section and key names follow the
//! hyperparameter table of the method: one section per algorithm, one key
//! per row.

use std::path::{Path, PathBuf};
use std::time::Duration;

use abm_calib_core::acquisition::AcquisitionOptions;
use abm_calib_core::engine::RunConfig;
use abm_calib_core::forest::ForestParams;
use abm_calib_core::lbfgsb::{self, Method};
use abm_calib_core::pareto::{ParetoConfig, N_CRITERIA};
use abm_calib_core::simulators::{BenchmarkKind, ExternalSimulatorConfig, ToyScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub bayesian_optimization: BayesianOptimization,
    #[serde(default)]
    pub random_forest: RandomForestSection,
    #[serde(default)]
    pub acquisition_optimizer: AcquisitionOptimizer,
    #[serde(default)]
    pub paths: Paths,
    pub simulator: SimulatorSection,
    #[serde(default)]
    pub pareto: ParetoSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesianOptimization {
    /// LHS design size.
    pub initial_samples: usize,
    /// Acquisitions after the initial design.
    pub termination_iterations: usize,
    /// Wall-clock ceiling per run; zero disables it.
    pub termination_hours: f64,
    pub retrain_surrogate_every: usize,
    pub acquisition_starts: usize,
    pub runs: usize,
    pub seed: u64,
    pub failure_cap: usize,
}

impl Default for BayesianOptimization {
    fn default() -> Self {
        let rc = RunConfig::default();
        BayesianOptimization {
            initial_samples: rc.n_initial,
            termination_iterations: rc.max_iterations,
            termination_hours: rc.max_wall_clock.map_or(0.0, |d| d.as_secs_f64() / 3600.0),
            retrain_surrogate_every: rc.retrain_period,
            acquisition_starts: rc.acquisition.n_starts,
            runs: rc.n_runs,
            seed: rc.master_seed,
            failure_cap: rc.failure_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForestSection {
    pub number_of_trees: usize,
    pub min_samples_leaf: usize,
    /// Omitted means a third of the dimensions, rounded up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
}

impl Default for RandomForestSection {
    fn default() -> Self {
        let f = ForestParams::default();
        RandomForestSection {
            number_of_trees: f.n_trees,
            min_samples_leaf: f.min_samples_leaf,
            max_features: f.max_features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionOptimizer {
    pub method: Method,
    pub termination_iterations: usize,
    /// Finite-difference step in unit-cube coordinates.
    pub gradient_step: f64,
    pub memory: usize,
}

impl Default for AcquisitionOptimizer {
    fn default() -> Self {
        let o = lbfgsb::Options::default();
        AcquisitionOptimizer {
            method: o.method,
            termination_iterations: o.max_iterations,
            gradient_step: o.fd_step,
            memory: o.memory,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub space: PathBuf,
    pub targets: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            space: "space.csv".into(),
            targets: "targets".into(),
            output: "output".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulatorKind {
    Toy,
    External,
    Benchmark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSection {
    pub kind: SimulatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalSimulatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub agents: usize,
    pub grid: usize,
    pub spacing_km: f64,
    pub population_seed: u64,
    /// Held fixed across evaluations so cost differences reflect parameters.
    pub simulation_seed: u64,
}

impl Default for ToySection {
    fn default() -> Self {
        let c = ToyScenarioConfig::default();
        ToySection {
            agents: c.n_agents,
            grid: c.grid,
            spacing_km: c.spacing_km,
            population_seed: c.population_seed,
            simulation_seed: 7,
        }
    }
}

impl ToySection {
    pub fn scenario_config(&self) -> ToyScenarioConfig {
        ToyScenarioConfig {
            n_agents: self.agents,
            grid: self.grid,
            spacing_km: self.spacing_km,
            population_seed: self.population_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub function: BenchmarkKind,
    pub dimension: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Feasibility ceilings for the ex-post analysis. Omitted keys mean no
/// ceiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_share_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_spatial_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education_spatial_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_count_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_legs_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_legs_error: Option<f64>,
}

impl Default for ParetoSection {
    fn default() -> Self {
        ParetoSection {
            modal_share_error: Some(ParetoConfig::default().thresholds[0]),
            work_spatial_error: None,
            education_spatial_error: None,
            worker_count_error: None,
            total_legs_error: None,
            spatial_legs_error: None,
        }
    }
}

impl ParetoSection {
    pub fn to_config(&self) -> ParetoConfig {
        let keys: [Option<f64>; N_CRITERIA] = [
            self.modal_share_error,
            self.work_spatial_error,
            self.education_spatial_error,
            self.worker_count_error,
            self.total_legs_error,
            self.spatial_legs_error,
        ];
        ParetoConfig {
            thresholds: keys.map(|k| k.unwrap_or(f64::INFINITY)),
        }
    }
}

impl ToolConfig {
    pub fn parse(text: &str, label: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![format!("{label}: {}", e.message().trim())]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.space);
        fix(&mut self.paths.targets);
        fix(&mut self.paths.output);
        if let Some(ext) = self.simulator.external.as_mut() {
            fix(&mut ext.workdir);
            if ext.program.components().count() > 1 {
                fix(&mut ext.program);
            }
        }
    }

    pub fn run_config(&self) -> RunConfig {
        let bo = &self.bayesian_optimization;
        let rf = &self.random_forest;
        let ao = &self.acquisition_optimizer;
        RunConfig {
            n_initial: bo.initial_samples,
            max_iterations: bo.termination_iterations,
            max_wall_clock: (bo.termination_hours > 0.0 && bo.termination_hours.is_finite())
                .then(|| Duration::from_secs_f64(bo.termination_hours * 3600.0)),
            retrain_period: bo.retrain_surrogate_every,
            forest: ForestParams {
                n_trees: rf.number_of_trees,
                min_samples_leaf: rf.min_samples_leaf,
                max_features: rf.max_features,
            },
            acquisition: AcquisitionOptions {
                n_starts: bo.acquisition_starts,
                quasi_newton: lbfgsb::Options {
                    method: ao.method,
                    max_iterations: ao.termination_iterations,
                    memory: ao.memory,
                    fd_step: ao.gradient_step,
                    ..Default::default()
                },
                ..Default::default()
            },
            master_seed: bo.seed,
            n_runs: bo.runs,
            failure_cap: bo.failure_cap,
            ..Default::default()
        }
    }

    /// Every problem found, so a user can fix them all in one pass.
    pub fn problems(&self) -> Vec<String> {
        let mut p = self.run_config().problems();
        let bo = &self.bayesian_optimization;
        if !(bo.termination_hours >= 0.0) {
            p.push(format!("termination_hours {} must be >= 0", bo.termination_hours));
        }
        if self.acquisition_optimizer.memory == 0 {
            p.push("acquisition_optimizer.memory must be >= 1".into());
        }
        if self.acquisition_optimizer.termination_iterations == 0 {
            p.push("acquisition_optimizer.termination_iterations must be >= 1".into());
        }
        if let Err(e) = self.pareto.to_config().validate() {
            p.push(e.to_string());
        }

        let uses_files = self.simulator.kind != SimulatorKind::Benchmark;
        if uses_files {
            if !self.paths.space.is_file() {
                p.push(format!("space file {} does not exist", self.paths.space.display()));
            }
            if !self.paths.targets.is_dir() {
                p.push(format!("targets directory {} does not exist", self.paths.targets.display()));
            }
        }
        if let Some(parent) = self.paths.output.parent() {
            let creatable = parent.as_os_str().is_empty() || parent.is_dir() || !parent.exists();
            if !creatable || self.paths.output.is_file() {
                p.push(format!("output directory {} cannot be created", self.paths.output.display()));
            }
        }

        let sim = &self.simulator;
        match sim.kind {
            SimulatorKind::Toy => {
                let t = sim.toy.clone().unwrap_or_default();
                if t.agents == 0 {
                    p.push("simulator.toy.agents must be >= 1".into());
                }
                if t.grid < 2 {
                    p.push("simulator.toy.grid must be >= 2".into());
                }
                if !(t.spacing_km > 0.0) {
                    p.push("simulator.toy.spacing_km must be > 0".into());
                }
            }
            SimulatorKind::External => match &sim.external {
                None => p.push("simulator.kind = \"external\" needs a [simulator.external] table".into()),
                Some(ext) => {
                    if let Err(e) = ext.validate() {
                        p.push(e.to_string());
                    }
                }
            },
            SimulatorKind::Benchmark => match &sim.benchmark {
                None => p.push("simulator.kind = \"benchmark\" needs a [simulator.benchmark] table".into()),
                Some(b) => {
                    if let Err(e) =
                        abm_calib_core::simulators::BenchmarkProblem::new(b.function, b.dimension, b.lower, b.upper)
                    {
                        p.push(e.to_string());
                    }
                }
            },
        }
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p))
        }
    }
}

/// The file written by `init`. Every key is present with its default so the
/// file doubles as documentation.
pub const TEMPLATE: &str = r#"# abm-calib configuration
#
# Relative paths are resolved against the directory holding this file.

[bayesian_optimization]
# Size of the Latin Hypercube initial design.
initial_samples = 50
# Surrogate-guided evaluations after the initial design.
termination_iterations = 500
# Wall-clock ceiling per run in hours; 0 disables it.
termination_hours = 1.0
# Refit the random forest after this many new evaluations.
retrain_surrogate_every = 5
# Optimizer starts per acquisition: the incumbent plus uniform draws.
acquisition_starts = 10
# Independent runs with seeds derived from `seed`.
runs = 5
seed = 2015
# A run aborts once more evaluations than this have failed.
failure_cap = 25

[random_forest]
# 1000, 3000 and 5000 were the tested sizes.
number_of_trees = 1000
min_samples_leaf = 1
# Candidate dimensions per split. Leave unset for ceil(d / 3).
# max_features = 8

[acquisition_optimizer]
# "l-bfgs-b" or "projected-gradient".
method = "l-bfgs-b"
termination_iterations = 1000
# Central finite-difference step in unit-cube coordinates.
gradient_step = 0.5
memory = 10

[paths]
# Parameter space: name,lower,upper,initial
space = "space.csv"
# Observed targets: od.csv, modes.csv, workers.csv and optionally aux.csv
targets = "targets"
output = "output"

[simulator]
# "toy", "external" or "benchmark".
kind = "toy"

[simulator.toy]
agents = 5000
grid = 4
spacing_km = 1.5
population_seed = 2015
simulation_seed = 7

# [simulator.external]
# program = "./run_model.sh"
# args = ["{params}", "{workdir}"]
# workdir = "work"
# timeout_seconds = 3600.0

# [simulator.benchmark]
# function = "sphere"   # sphere, rosenbrock or rastrigin
# dimension = 5
# lower = -2.0
# upper = 2.0

[pareto]
# Feasibility ceilings applied before the dominance filter. Unset keys impose
# no ceiling.
modal_share_error = 0.10
# work_spatial_error = 50.0
# education_spatial_error = 50.0
# worker_count_error = 100.0
# total_legs_error = 500.0
# spatial_legs_error = 100.0
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parses_to_defaults() {
        let cfg = ToolConfig::parse(TEMPLATE, "template").unwrap();
        assert_eq!(cfg.random_forest, RandomForestSection::default());
        assert_eq!(cfg.acquisition_optimizer, AcquisitionOptimizer::default());
        assert_eq!(cfg.pareto, ParetoSection::default());
        assert_eq!(cfg.simulator.toy, Some(ToySection::default()));
        let rc = cfg.run_config();
        assert_eq!(rc.n_initial, 50);
        assert_eq!(rc.max_iterations, 500);
        assert_eq!(rc.max_wall_clock, Some(Duration::from_secs(3600)));
    }

    #[test]
    fn template_round_trips() {
        let cfg = ToolConfig::parse(TEMPLATE, "template").unwrap();
        let again = ToolConfig::parse(&cfg.to_toml(), "again").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = TEMPLATE.replace("memory = 10", "memory = 10\nmemroy = 3");
        let err = ToolConfig::parse(&text, "cfg").unwrap_err();
        assert!(err.to_string().contains("memroy"), "{err}");
    }

    #[test]
    fn problems_are_reported_together() {
        let mut cfg = ToolConfig::parse(TEMPLATE, "template").unwrap();
        cfg.resolve_paths(Path::new("/nonexistent-dir"));
        cfg.bayesian_optimization.initial_samples = 1;
        cfg.random_forest.number_of_trees = 0;
        let p = cfg.problems();
        assert!(p.iter().any(|s| s.contains("initial sample")));
        assert!(p.iter().any(|s| s.contains("tree")));
        assert!(p.iter().any(|s| s.contains("space file")));
        assert!(p.iter().any(|s| s.contains("targets directory")));
    }
}
