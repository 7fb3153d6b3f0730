//! The sequential calibration loop and its multi-run driver.
//!
//! A run evaluates a Latin Hypercube initial design, fits the forest, then
//! alternates acquisition and evaluation, refitting every `retrain_period`
//! evaluations. The incumbent handed to the acquisition is always current
//! even when the forest is stale. Every random draw is keyed by
//! `(master_seed, run_id, stream, index)`, so the state after `k` records is
//! a pure function of the config and the first `k` records; resuming from an
//! archive therefore reproduces an uninterrupted run exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, AcquisitionContext, AcquisitionOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forest::{ForestParams, RandomForest, TrainingSet};
use crate::objective::{epsilon_global, CostBreakdown, SimulationSummary};
use crate::pareto::{compute_criteria, CriterionVector, ParetoCandidate};
use crate::rng;
use crate::simulators::{BenchmarkProblem, Simulator};
use crate::space::{ParameterSpace, ParameterVector, UnitVector};

const STREAM_LHS: u64 = 1;
const STREAM_FOREST: u64 = 2;
const STREAM_ACQUISITION: u64 = 3;

pub const CHECKPOINT_MAGIC: &str = "ABMCALIB-CKPT v1";
pub const ARCHIVE_FILE: &str = "archive.jsonl";
pub const CHECKPOINT_FILE: &str = "state.ckpt";
pub const TIMING_FILE: &str = "timing.log";

/// Result of scoring one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub cost: CostBreakdown,
    pub criteria: Option<CriterionVector>,
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, theta: &ParameterVector) -> Result<Evaluation>;
}

/// A simulator scored against fixed targets.
pub struct Calibration {
    pub simulator: Box<dyn Simulator>,
    pub targets: SimulationSummary,
}

impl Calibration {
    pub fn score(&self, sim: &SimulationSummary) -> Result<Evaluation> {
        let cost = epsilon_global(sim, &self.targets)?;
        let criteria = match (&sim.aux, &self.targets.aux) {
            (Some(_), Some(_)) => Some(compute_criteria(sim, &self.targets)?),
            _ => None,
        };
        Ok(Evaluation { cost, criteria })
    }
}

impl Evaluator for Calibration {
    fn evaluate(&self, theta: &ParameterVector) -> Result<Evaluation> {
        self.score(&self.simulator.simulate(theta)?)
    }
}

impl Evaluator for BenchmarkProblem {
    fn evaluate(&self, theta: &ParameterVector) -> Result<Evaluation> {
        Ok(Evaluation {
            cost: CostBreakdown::scalar(BenchmarkProblem::evaluate(self, theta)?),
            criteria: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_initial: usize,
    /// Acquisitions after the initial design.
    pub max_iterations: usize,
    pub max_wall_clock: Option<Duration>,
    pub retrain_period: usize,
    pub forest: ForestParams,
    pub acquisition: AcquisitionOptions,
    pub master_seed: u64,
    pub n_runs: usize,
    /// A run aborts once more than this many evaluations have failed.
    pub failure_cap: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_initial: 50,
            max_iterations: 500,
            max_wall_clock: Some(Duration::from_secs(3600)),
            retrain_period: 5,
            forest: ForestParams::default(),
            acquisition: AcquisitionOptions::default(),
            master_seed: 0,
            n_runs: 5,
            failure_cap: 25,
            exec: Execution::default(),
        }
    }
}

impl RunConfig {
    /// Lists every problem instead of stopping at the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.n_initial < 2 {
            p.push(format!("initial sample count {} must be >= 2", self.n_initial));
        }
        if self.retrain_period == 0 {
            p.push("retrain period must be >= 1".into());
        }
        if self.n_runs == 0 {
            p.push("run count must be >= 1".into());
        }
        if self.forest.n_trees == 0 {
            p.push("forest needs at least one tree".into());
        }
        if self.forest.min_samples_leaf == 0 {
            p.push("min_samples_leaf must be >= 1".into());
        }
        if self.forest.max_features == Some(0) {
            p.push("max_features must be >= 1".into());
        }
        if self.acquisition.n_starts == 0 {
            p.push("acquisition needs at least one start".into());
        }
        if !(self.acquisition.quasi_newton.fd_step > 0.0) {
            p.push("gradient step must be > 0".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(p.join("; ")))
        }
    }

    pub fn run_seed(&self, run_id: u64) -> u64 {
        rng::derive_seed(self.master_seed, run_id)
    }

    /// Settings that must match for a resume to be valid.
    fn fingerprint(&self, space: &ParameterSpace) -> serde_json::Value {
        serde_json::json!({
            "dimension": space.dimension(),
            "names": space.names().collect::<Vec<_>>(),
            "n_initial": self.n_initial,
            "retrain_period": self.retrain_period,
            "forest": self.forest,
            "acquisition": self.acquisition,
            "master_seed": self.master_seed,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Acquisition,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub run_id: u64,
    /// 1-based; the initial design occupies `1..=n_initial`.
    pub iteration: u64,
    pub origin: Origin,
    pub theta: ParameterVector,
    pub unit: UnitVector,
    /// `None` for a failed evaluation.
    pub cost: Option<CostBreakdown>,
    pub criteria: Option<CriterionVector>,
    pub failed: bool,
    pub error: Option<String>,
    /// Seed of the draw stream that produced this point.
    pub seed: u64,
    /// Kept out of the archive file so archives stay byte-reproducible.
    #[serde(skip)]
    pub eval_seconds: f64,
}

impl ArchiveRecord {
    /// `+inf` for failed evaluations.
    pub fn eps_global(&self) -> f64 {
        self.cost.map_or(f64::INFINITY, |c| c.eps_global)
    }
}

impl ParetoCandidate for ArchiveRecord {
    fn criteria(&self) -> Option<&CriterionVector> {
        self.criteria.as_ref()
    }
    fn eps_global(&self) -> f64 {
        ArchiveRecord::eps_global(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    WallClock,
    Interrupted,
}

#[derive(Clone, Debug)]
pub struct RunState {
    pub run_id: u64,
    pub archive: Vec<ArchiveRecord>,
    /// Index into `archive` of the best successful record.
    pub incumbent: Option<usize>,
    pub forest: Option<RandomForest>,
    pub evaluations_since_retrain: usize,
    /// Archive length at the last refit.
    pub trained_records: usize,
    /// Iterations of the records the current forest was fitted on.
    pub training_iterations: Vec<u64>,
    pub retrain_count: u64,
    pub failures: usize,
    pub termination: Termination,
}

impl RunState {
    fn new(run_id: u64) -> Self {
        RunState {
            run_id,
            archive: Vec::new(),
            incumbent: None,
            forest: None,
            evaluations_since_retrain: 0,
            trained_records: 0,
            training_iterations: Vec::new(),
            retrain_count: 0,
            failures: 0,
            termination: Termination::Budget,
        }
    }

    pub fn best(&self) -> Option<&ArchiveRecord> {
        self.incumbent.map(|i| &self.archive[i])
    }

    pub fn best_value(&self) -> f64 {
        self.best().map_or(f64::INFINITY, ArchiveRecord::eps_global)
    }

    /// Running minimum of `eps_global` after each record.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        incumbent_trace(&self.archive)
    }

    pub fn failed_records(&self) -> impl Iterator<Item = &ArchiveRecord> {
        self.archive.iter().filter(|r| r.failed)
    }

    fn push(&mut self, record: ArchiveRecord) {
        if record.failed {
            self.failures += 1;
        } else if record.eps_global() < self.best_value() {
            self.incumbent = Some(self.archive.len());
        }
        self.archive.push(record);
    }
}

pub fn incumbent_trace(records: &[ArchiveRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(f64::INFINITY, |best, r| {
            *best = best.min(r.eps_global());
            Some(*best)
        })
        .collect()
}

/// Search space plus the thing that scores points in it.
#[derive(Clone)]
pub struct Problem {
    pub space: ParameterSpace,
    pub evaluator: Arc<dyn Evaluator>,
}

/// Where run artifacts go, if anywhere.
#[derive(Clone, Debug, Default)]
pub struct Persistence {
    pub output_dir: Option<PathBuf>,
    pub resume: bool,
    /// Checked before every evaluation; once set, runs stop cleanly.
    pub stop: Option<Arc<AtomicBool>>,
}

impl Persistence {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Persistence {
            output_dir: Some(dir.into()),
            ..Default::default()
        }
    }

    pub fn resuming(mut self) -> Self {
        self.resume = true;
        self
    }

    pub fn run_dir(&self, run_id: u64) -> Option<PathBuf> {
        self.output_dir.as_ref().map(|d| run_dir(d, run_id))
    }
}

pub fn run_dir(output: &Path, run_id: u64) -> PathBuf {
    output.join(format!("run_{run_id}"))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    run_id: u64,
    records: usize,
    trained_records: usize,
    retrain_count: u64,
    evaluations_since_retrain: usize,
    failures: usize,
    incumbent: Option<usize>,
    settings: serde_json::Value,
}

struct RunWriter {
    dir: PathBuf,
    archive: File,
    timing: File,
}

impl RunWriter {
    fn open(dir: &Path, keep: usize) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let archive_path = dir.join(ARCHIVE_FILE);
        // Rewrite the archive with exactly the retained records, dropping
        // any torn trailing line from an interrupted write.
        let retained = if keep > 0 {
            let text = std::fs::read_to_string(&archive_path).map_err(|e| Error::io(&archive_path, e))?;
            text.lines().take(keep).map(|l| format!("{l}\n")).collect::<String>()
        } else {
            String::new()
        };
        std::fs::write(&archive_path, retained).map_err(|e| Error::io(&archive_path, e))?;
        let archive = OpenOptions::new()
            .append(true)
            .open(&archive_path)
            .map_err(|e| Error::io(&archive_path, e))?;
        let timing_path = dir.join(TIMING_FILE);
        let timing = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&timing_path)
            .map_err(|e| Error::io(&timing_path, e))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            archive,
            timing,
        })
    }

    fn append(&mut self, record: &ArchiveRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let path = self.dir.join(ARCHIVE_FILE);
        self.archive
            .write_all(line.as_bytes())
            .and_then(|_| self.archive.flush())
            .map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(self.timing, "{},{:.6}", record.iteration, record.eval_seconds);
        Ok(())
    }

    fn checkpoint(&self, state: &RunState, settings: &serde_json::Value) -> Result<()> {
        let ckpt = Checkpoint {
            run_id: state.run_id,
            records: state.archive.len(),
            trained_records: state.trained_records,
            retrain_count: state.retrain_count,
            evaluations_since_retrain: state.evaluations_since_retrain,
            failures: state.failures,
            incumbent: state.incumbent,
            settings: settings.clone(),
        };
        let tmp = self.dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        let body = format!("{CHECKPOINT_MAGIC}\n{}\n", serde_json::to_string(&ckpt)?);
        std::fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        let dst = self.dir.join(CHECKPOINT_FILE);
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
    }
}

/// Reads the complete records of `run_<id>/archive.jsonl`; a torn last line
/// is ignored.
pub fn read_archive(path: &Path) -> Result<Vec<ArchiveRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<ArchiveRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(Error::parse(label, i + 1, e.to_string())),
        }
    }
    Ok(records)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::parse(path.display().to_string(), 1, "bad checkpoint header"));
    }
    Ok(serde_json::from_str(lines.next().unwrap_or(""))?)
}

struct Runner<'a> {
    problem: &'a Problem,
    config: &'a RunConfig,
    run_id: u64,
    run_seed: u64,
    settings: serde_json::Value,
    writer: Option<RunWriter>,
    started: Instant,
    stop: Option<Arc<AtomicBool>>,
}

impl Runner<'_> {
    fn evaluate(&mut self, state: &mut RunState, unit: UnitVector, origin: Origin, seed: u64) -> Result<()> {
        let theta = self.problem.space.denormalize(&unit)?;
        let t0 = Instant::now();
        let outcome = self.problem.evaluator.evaluate(&theta);
        let eval_seconds = t0.elapsed().as_secs_f64();
        let iteration = state.archive.len() as u64 + 1;
        let record = match outcome {
            Ok(ev) if ev.cost.eps_global.is_finite() => ArchiveRecord {
                run_id: self.run_id,
                iteration,
                origin,
                theta,
                unit,
                cost: Some(ev.cost),
                criteria: ev.criteria,
                failed: false,
                error: None,
                seed,
                eval_seconds,
            },
            other => {
                let message = match other {
                    Err(e) => e.to_string(),
                    Ok(ev) => format!("non-finite cost {}", ev.cost.eps_global),
                };
                tracing::warn!(run = self.run_id, iteration, %message, "evaluation failed");
                ArchiveRecord {
                    run_id: self.run_id,
                    iteration,
                    origin,
                    theta,
                    unit,
                    cost: None,
                    criteria: None,
                    failed: true,
                    error: Some(message),
                    seed,
                    eval_seconds,
                }
            }
        };
        if let Some(w) = self.writer.as_mut() {
            w.append(&record)?;
        }
        let failed = record.failed;
        let message = record.error.clone();
        state.push(record);
        if let Some(w) = &self.writer {
            w.checkpoint(state, &self.settings)?;
        }
        if failed && state.failures > self.config.failure_cap {
            return Err(Error::FailureCap {
                run_id: self.run_id,
                failures: state.failures,
                last_error: message.unwrap_or_default(),
            });
        }
        Ok(())
    }

    fn refit(&self, state: &mut RunState) -> Result<()> {
        let used: Vec<&ArchiveRecord> = state.archive.iter().filter(|r| !r.failed).collect();
        let xs: Vec<UnitVector> = used.iter().map(|r| r.unit.clone()).collect();
        let ys: Vec<f64> = used.iter().map(|r| r.eps_global()).collect();
        let iterations = used.iter().map(|r| r.iteration).collect();
        if xs.is_empty() {
            return Err(Error::InvalidState(format!(
                "run {}: no successful evaluations to train on",
                self.run_id
            )));
        }
        let data = TrainingSet::new(&xs, &ys)?;
        let seed = rng::derive_path(self.run_seed, &[STREAM_FOREST, state.retrain_count]);
        state.forest = Some(RandomForest::fit_with(&data, &self.config.forest, seed, self.config.exec)?);
        state.retrain_count += 1;
        state.trained_records = state.archive.len();
        state.training_iterations = iterations;
        state.evaluations_since_retrain = 0;
        Ok(())
    }

    fn should_stop(&self) -> Option<Termination> {
        if self.stop.as_ref().is_some_and(|f| f.load(Ordering::Relaxed)) {
            return Some(Termination::Interrupted);
        }
        self.config
            .max_wall_clock
            .is_some_and(|limit| self.started.elapsed() >= limit)
            .then_some(Termination::WallClock)
    }

    fn run(mut self, mut state: RunState) -> Result<RunState> {
        let n0 = self.config.n_initial;
        let design_seed = rng::derive_seed(self.run_seed, STREAM_LHS);
        let design = self.problem.space.lhs_sample(n0, design_seed)?;
        while state.archive.len() < n0 {
            if let Some(t) = self.should_stop() {
                state.termination = t;
                return Ok(state);
            }
            let u = design[state.archive.len()].clone();
            self.evaluate(&mut state, u, Origin::Initial, design_seed)?;
        }
        if state.forest.is_none() {
            self.refit(&mut state)?;
        }

        let budget = n0 + self.config.max_iterations;
        while state.archive.len() < budget {
            if let Some(t) = self.should_stop() {
                state.termination = t;
                break;
            }
            let acq_seed = rng::derive_path(
                self.run_seed,
                &[STREAM_ACQUISITION, state.archive.len() as u64],
            );
            let evaluated: Vec<UnitVector> = state.archive.iter().map(|r| r.unit.clone()).collect();
            let best = state.best().map(|r| r.unit.clone());
            let ctx = AcquisitionContext {
                forest: state.forest.as_ref(),
                incumbent: state.best_value(),
                incumbent_point: best.as_ref(),
                evaluated: &evaluated,
            };
            let acq = optimize_acquisition(&ctx, &self.config.acquisition, acq_seed, self.config.exec)?;
            let origin = if acq.fallback_used {
                Origin::Fallback
            } else {
                Origin::Acquisition
            };
            self.evaluate(&mut state, acq.point, origin, acq_seed)?;
            state.evaluations_since_retrain += 1;
            if state.evaluations_since_retrain >= self.config.retrain_period {
                self.refit(&mut state)?;
                if let Some(w) = &self.writer {
                    w.checkpoint(&state, &self.settings)?;
                }
            }
        }
        Ok(state)
    }
}

/// Rebuilds the in-memory state implied by the first `records`.
fn replay(runner: &Runner<'_>, records: Vec<ArchiveRecord>) -> Result<RunState> {
    let mut state = RunState::new(runner.run_id);
    let n0 = runner.config.n_initial;
    let period = runner.config.retrain_period;
    let mut last_fit_len = None;
    for record in records {
        state.push(record);
        let len = state.archive.len();
        if len == n0 || (len > n0 && (len - n0) % period == 0) {
            last_fit_len = Some(len);
        }
    }
    if let Some(len) = last_fit_len {
        // Replay the refits in order so the retrain counter (and with it the
        // forest seed) matches the uninterrupted run.
        let fits = if len == n0 { 1 } else { 1 + (len - n0) / period } as u64;
        let tail = state.archive.split_off(len);
        state.retrain_count = fits - 1;
        runner.refit(&mut state)?;
        state.archive.extend(tail);
        state.evaluations_since_retrain = state.archive.len() - len;
    }
    Ok(state)
}

/// One calibration run.
pub fn run_single(
    problem: &Problem,
    config: &RunConfig,
    run_id: u64,
    persistence: &Persistence,
) -> Result<RunState> {
    config.validate()?;
    let settings = config.fingerprint(&problem.space);
    let mut runner = Runner {
        problem,
        config,
        run_id,
        run_seed: config.run_seed(run_id),
        settings: settings.clone(),
        writer: None,
        started: Instant::now(),
        stop: persistence.stop.clone(),
    };

    let mut state = RunState::new(run_id);
    if let Some(dir) = persistence.run_dir(run_id) {
        let archive_path = dir.join(ARCHIVE_FILE);
        let mut keep = 0;
        if persistence.resume && archive_path.exists() {
            let ckpt_path = dir.join(CHECKPOINT_FILE);
            if ckpt_path.exists() {
                let ckpt = read_checkpoint(&ckpt_path)?;
                if ckpt.settings != settings || ckpt.run_id != run_id {
                    return Err(Error::InvalidState(format!(
                        "checkpoint in {} was written with different settings",
                        dir.display()
                    )));
                }
            }
            let records = read_archive(&archive_path)?;
            if records.iter().enumerate().any(|(i, r)| r.iteration != i as u64 + 1 || r.run_id != run_id) {
                return Err(Error::InvalidState(format!(
                    "archive {} is not a contiguous record of run {run_id}",
                    archive_path.display()
                )));
            }
            keep = records.len();
            state = replay(&runner, records)?;
        }
        runner.writer = Some(RunWriter::open(&dir, keep)?);
    }

    let state = runner.run(state)?;
    tracing::info!(
        run = run_id,
        records = state.archive.len(),
        best = state.best_value(),
        "run finished"
    );
    Ok(state)
}

#[derive(Debug)]
pub struct ManyRuns {
    pub runs: Vec<Result<RunState>>,
}

impl ManyRuns {
    pub fn completed(&self) -> impl Iterator<Item = &RunState> {
        self.runs.iter().filter_map(|r| r.as_ref().ok())
    }

    /// `(run_id, record)` of the best successful record across runs.
    pub fn best(&self) -> Option<(u64, &ArchiveRecord)> {
        self.completed()
            .filter_map(|s| s.best().map(|b| (s.run_id, b)))
            .fold(None, |acc: Option<(u64, &ArchiveRecord)>, (id, r)| match acc {
                Some((_, a)) if a.eps_global() <= r.eps_global() => acc,
                _ => Some((id, r)),
            })
    }
}

/// `n_runs` independent runs with ids `0..n_runs`.
pub fn run_many(problem: &Problem, config: &RunConfig, persistence: &Persistence) -> Result<ManyRuns> {
    config.validate()?;
    let runs = config.exec.map_indexed(config.n_runs, |i| {
        run_single(problem, config, i as u64, persistence)
    });
    Ok(ManyRuns { runs })
}

/// Best-so-far trace of uniform random search over the unit cube, as a
/// same-budget baseline.
pub fn random_search(problem: &Problem, budget: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng::rng_from(seed);
    let d = problem.space.dimension();
    let mut best = f64::INFINITY;
    let mut trace = Vec::with_capacity(budget);
    for _ in 0..budget {
        let u = UnitVector((0..d).map(|_| rng.gen::<f64>()).collect());
        let theta = problem.space.denormalize(&u)?;
        if let Ok(ev) = problem.evaluator.evaluate(&theta) {
            best = best.min(ev.cost.eps_global);
        }
        trace.push(best);
    }
    Ok(trace)
}
