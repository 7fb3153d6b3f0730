use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use abm_calib_core::engine::{
    self, incumbent_trace, read_archive, ArchiveRecord, Calibration, Persistence, Problem,
};
use abm_calib_core::pareto::{self, ReportRow, N_CRITERIA};
use abm_calib_core::simulators::files::{self, read_summary_dir, write_params, write_summary_dir};
use abm_calib_core::simulators::{
    BenchmarkProblem, BetaLayout, ExternalSimulator, Simulator, ToyScenario, ToySimulator,
};
use abm_calib_core::space::ParameterSpace;
use abm_calib_core::Execution;

use crate::config::{SimulatorKind, ToolConfig, ToySection, TEMPLATE};
use crate::CliError;

pub const BEST_FILE: &str = "best.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const PARETO_FILE: &str = "pareto_report.csv";
pub const LOCK_FILE: &str = ".lock";
pub const LOG_FILE: &str = "calibrate.log";
/// Ground-truth vector written next to the template by `init`.
pub const THETA_STAR_FILE: &str = "theta_star.csv";

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Builds the toy simulator for `space`, choosing the padded layout when the
/// space carries more names than the model has terms.
pub fn toy_simulator(toy: &ToySection, space: &ParameterSpace) -> CliResult<ToySimulator> {
    let standard = BetaLayout::standard();
    let layout = if space.dimension() > standard.dimension() {
        BetaLayout::padded(space.dimension())
    } else {
        standard
    };
    let scenario = ToyScenario::generate(&toy.scenario_config())?.with_layout(layout);
    Ok(ToySimulator::new(Arc::new(scenario), space.clone(), toy.simulation_seed)?)
}

/// The search space and evaluator a config describes.
pub fn build_problem(cfg: &ToolConfig) -> CliResult<Problem> {
    let sim = &cfg.simulator;
    if sim.kind == SimulatorKind::Benchmark {
        let b = sim
            .benchmark
            .as_ref()
            .ok_or_else(|| CliError::config("missing [simulator.benchmark] table"))?;
        let problem = BenchmarkProblem::new(b.function, b.dimension, b.lower, b.upper)?;
        return Ok(Problem {
            space: problem.space(),
            evaluator: Arc::new(problem),
        });
    }

    let space = ParameterSpace::read_csv(&cfg.paths.space)?;
    let targets = read_summary_dir(&cfg.paths.targets)?;
    let simulator: Box<dyn Simulator> = match sim.kind {
        SimulatorKind::Toy => Box::new(toy_simulator(&sim.toy.clone().unwrap_or_default(), &space)?),
        SimulatorKind::External => {
            let ext = sim
                .external
                .clone()
                .ok_or_else(|| CliError::config("missing [simulator.external] table"))?;
            Box::new(ExternalSimulator {
                config: ext,
                space: space.clone(),
            })
        }
        SimulatorKind::Benchmark => unreachable!(),
    };
    Ok(Problem {
        space,
        evaluator: Arc::new(Calibration { simulator, targets }),
    })
}

/// Files `init` creates inside `dir`.
fn init_outputs(config_path: &Path) -> Vec<PathBuf> {
    let dir = config_path.parent().unwrap_or(Path::new("."));
    let mut out = vec![
        config_path.to_path_buf(),
        dir.join("space.csv"),
        dir.join(THETA_STAR_FILE),
    ];
    for f in [files::OD_FILE, files::MODES_FILE, files::WORKERS_FILE, files::AUX_FILE] {
        out.push(dir.join("targets").join(f));
    }
    out
}

/// Writes the commented template, the 24-parameter space, the ground-truth
/// vector and toy targets simulated at it.
pub fn init(config_path: &Path, force: bool) -> CliResult<Vec<PathBuf>> {
    let outputs = init_outputs(config_path);
    if !force {
        let existing: Vec<String> = outputs
            .iter()
            .filter(|p| p.exists())
            .map(|p| format!("{} already exists (use --force to overwrite)", p.display()))
            .collect();
        if !existing.is_empty() {
            return Err(CliError::Config(existing));
        }
    }
    let dir = config_path.parent().unwrap_or(Path::new("."));
    write_file(config_path, TEMPLATE)?;

    let layout = BetaLayout::standard();
    let space = layout.space();
    let space_path = dir.join("space.csv");
    space.write_csv(&space_path)?;
    let theta_star = layout.reference_theta();
    write_params(&dir.join(THETA_STAR_FILE), &space, &theta_star)?;

    let sim = toy_simulator(&ToySection::default(), &space)?;
    let targets = sim.simulate(&theta_star)?;
    write_summary_dir(&dir.join("targets"), &targets)?;
    Ok(outputs)
}

#[derive(Clone, Debug, Default)]
pub struct CalibrateOptions {
    pub resume: bool,
    pub force: bool,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub exec: Execution,
    pub stop: Option<Arc<AtomicBool>>,
}

/// Holds the output directory for the lifetime of a calibration.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Other(format!(
                "{} is locked by another calibration; remove {} if that process is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn log_line(dir: &Path, line: &str) {
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE)) {
        let _ = writeln!(f, "{} {line}", unix_now());
    }
}

fn run_dirs(output: &Path) -> CliResult<Vec<(u64, PathBuf)>> {
    let mut dirs = Vec::new();
    if !output.is_dir() {
        return Ok(dirs);
    }
    for entry in std::fs::read_dir(output).map_err(|e| CliError::io(output, e))? {
        let entry = entry.map_err(|e| CliError::io(output, e))?;
        let name = entry.file_name();
        let id = name
            .to_str()
            .and_then(|n| n.strip_prefix("run_"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(id) = id {
            if entry.path().join(engine::ARCHIVE_FILE).is_file() {
                dirs.push((id, entry.path()));
            }
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[derive(Debug)]
pub struct CalibrateOutcome {
    pub report: Report,
    /// Per-run error messages for runs that did not complete.
    pub failed_runs: Vec<(u64, String)>,
}

pub fn calibrate(config_path: &Path, opts: &CalibrateOptions) -> CliResult<CalibrateOutcome> {
    let mut cfg = ToolConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.bayesian_optimization.seed = seed;
    }
    if let Some(runs) = opts.runs {
        cfg.bayesian_optimization.runs = runs;
    }
    cfg.validate()?;
    let problem = build_problem(&cfg)?;
    let mut run_config = cfg.run_config();
    run_config.exec = opts.exec;

    let output = cfg.paths.output.clone();
    let _lock = DirLock::acquire(&output)?;
    let existing = run_dirs(&output)?;
    if !existing.is_empty() && !opts.resume {
        if !opts.force {
            return Err(CliError::config(format!(
                "{} already holds run archives; pass --resume to continue them or --force to start over",
                output.display()
            )));
        }
        for (_, dir) in &existing {
            std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    log_line(
        &output,
        &format!(
            "start seed={} runs={} resume={}",
            run_config.master_seed, run_config.n_runs, opts.resume
        ),
    );

    let persistence = Persistence {
        output_dir: Some(output.clone()),
        resume: opts.resume,
        stop: opts.stop.clone(),
    };
    let many = engine::run_many(&problem, &run_config, &persistence)?;
    let mut failed_runs = Vec::new();
    let mut cap_hit = None;
    for (id, r) in many.runs.iter().enumerate() {
        if let Err(e) = r {
            if matches!(e, abm_calib_core::Error::FailureCap { .. }) {
                cap_hit = Some(e.to_string());
            }
            tracing::error!(run = id, error = %e, "run did not complete");
            failed_runs.push((id as u64, e.to_string()));
        }
    }
    for s in many.completed() {
        tracing::info!(run = s.run_id, termination = ?s.termination, best = s.best_value(), "run summary");
    }

    let report = write_reports(&cfg, &problem.space)?;
    log_line(
        &output,
        &format!("end completed={} failed={}", many.completed().count(), failed_runs.len()),
    );
    if let Some(msg) = cap_hit {
        return Err(CliError::FailureCap(msg));
    }
    if many.completed().next().is_none() {
        let msgs = failed_runs.iter().map(|(id, m)| format!("run {id}: {m}")).collect::<Vec<_>>();
        return Err(CliError::Other(format!("no run completed: {}", msgs.join("; "))));
    }
    Ok(CalibrateOutcome { report, failed_runs })
}

#[derive(Debug)]
pub struct Report {
    /// `(run_id, best eps_global, archive length)`.
    pub runs: Vec<(u64, f64, usize)>,
    pub best: Option<ArchiveRecord>,
    pub pareto_rows: usize,
    pub empty_feasible_set: bool,
}

impl Report {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (id, best, n) in &self.runs {
            let _ = writeln!(s, "run {id}: {n} evaluations, best eps_global {best}");
        }
        match &self.best {
            Some(b) => {
                let _ = writeln!(
                    s,
                    "best overall: run {} iteration {} eps_global {}",
                    b.run_id,
                    b.iteration,
                    b.eps_global()
                );
            }
            None => s.push_str("no successful evaluation\n"),
        }
        let _ = writeln!(s, "pareto front: {} record(s)", self.pareto_rows);
        if self.empty_feasible_set {
            s.push_str("no record met every feasibility threshold\n");
        }
        s
    }
}

/// Formats the per-iteration incumbents of each run, one column per run.
pub fn format_trace(traces: &[(u64, Vec<f64>)]) -> String {
    let mut out = String::from("iteration");
    for (id, _) in traces {
        let _ = write!(out, ",run_{id}");
    }
    out.push('\n');
    let len = traces.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    for i in 0..len {
        let _ = write!(out, "{}", i + 1);
        for (_, t) in traces {
            match t.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Rebuilds `best.csv`, `trace.csv` and `pareto_report.csv` from the run
/// archives, so the reports always agree with the archives.
pub fn write_reports(cfg: &ToolConfig, space: &ParameterSpace) -> CliResult<Report> {
    let output = &cfg.paths.output;
    let mut traces = Vec::new();
    let mut runs = Vec::new();
    let mut all: Vec<ArchiveRecord> = Vec::new();
    for (id, dir) in run_dirs(output)? {
        let records = read_archive(&dir.join(engine::ARCHIVE_FILE))?;
        let trace = incumbent_trace(&records);
        runs.push((id, trace.last().copied().unwrap_or(f64::INFINITY), records.len()));
        traces.push((id, trace));
        all.extend(records);
    }

    let best = all
        .iter()
        .filter(|r| !r.failed)
        .fold(None::<&ArchiveRecord>, |acc, r| match acc {
            Some(b) if b.eps_global() <= r.eps_global() => acc,
            _ => Some(r),
        })
        .cloned();
    let best_path = output.join(BEST_FILE);
    match &best {
        Some(b) => write_file(&best_path, &files::format_params(space, &b.theta)?)?,
        None => write_file(&best_path, "name,value\n")?,
    }
    write_file(&output.join(TRACE_FILE), &format_trace(&traces))?;

    let front = pareto::pareto_front(&all, &cfg.pareto.to_config());
    let rows: Vec<ReportRow> = front
        .members
        .iter()
        .filter_map(|r| Some(ReportRow::new(r.run_id, r.iteration, r.cost.as_ref()?, r.criteria.as_ref()?)))
        .collect();
    let mut buf = Vec::new();
    pareto::write_report(&rows, &mut buf)?;
    write_file(&output.join(PARETO_FILE), &String::from_utf8_lossy(&buf))?;

    Ok(Report {
        runs,
        best,
        pareto_rows: rows.len(),
        empty_feasible_set: front.empty_feasible_set,
    })
}

pub fn report(config_path: &Path) -> CliResult<Report> {
    let cfg = ToolConfig::load(config_path)?;
    let space = match cfg.simulator.kind {
        SimulatorKind::Benchmark => build_problem(&cfg)?.space,
        _ => ParameterSpace::read_csv(&cfg.paths.space)?,
    };
    if run_dirs(&cfg.paths.output)?.is_empty() {
        return Err(CliError::config(format!(
            "{} holds no run archives",
            cfg.paths.output.display()
        )));
    }
    write_reports(&cfg, &space)
}

/// Scores one parameter file and returns a single-row report in the
/// `pareto_report.csv` format. Criteria the binding cannot provide are NaN.
pub fn evaluate(config_path: &Path, params_path: &Path) -> CliResult<String> {
    let cfg = ToolConfig::load(config_path)?;
    cfg.validate()?;
    let problem = build_problem(&cfg)?;
    let theta = files::read_params(params_path, &problem.space)?;
    let ev = problem.evaluator.evaluate(&theta)?;
    let criteria = ev
        .criteria
        .unwrap_or(pareto::CriterionVector([f64::NAN; N_CRITERIA]));
    let row = ReportRow::new(0, 0, &ev.cost, &criteria);
    let mut buf = Vec::new();
    pareto::write_report(&[row], &mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Front of the rows in `inputs` under the config's thresholds (or the
/// default thresholds without a config), in `pareto_report.csv` format.
pub fn pareto(config_path: Option<&Path>, inputs: &[PathBuf]) -> CliResult<(String, usize)> {
    let thresholds = match config_path {
        Some(p) => ToolConfig::load(p)?.pareto.to_config(),
        None => pareto::ParetoConfig::default(),
    };
    thresholds.validate()?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for path in inputs {
        let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        for row in pareto::read_report(f, &path.display().to_string())? {
            if row.criteria_vector().0.iter().any(|v| v.is_nan()) {
                skipped += 1;
            } else {
                rows.push(row);
            }
        }
    }
    let front = pareto::pareto_front_rows(&rows, &thresholds);
    let mut buf = Vec::new();
    pareto::write_report(&front.members, &mut buf)?;
    Ok((String::from_utf8_lossy(&buf).into_owned(), skipped))
}

/// Run ids and their archives under `output`, for tests and tooling.
pub fn load_archives(output: &Path) -> CliResult<BTreeMap<u64, Vec<ArchiveRecord>>> {
    let mut out = BTreeMap::new();
    for (id, dir) in run_dirs(output)? {
        out.insert(id, read_archive(&dir.join(engine::ARCHIVE_FILE))?);
    }
    Ok(out)
}
