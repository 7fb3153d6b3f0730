use std::path::{Path, PathBuf};
use std::process::Command;

use abm_calib::commands::{self, CalibrateOptions, BEST_FILE, PARETO_FILE, THETA_STAR_FILE, TRACE_FILE};
use abm_calib::config::ToolConfig;
use abm_calib::{CliError, EXIT_CONFIG};
use abm_calib_core::engine::incumbent_trace;
use abm_calib_core::pareto::read_report;

const SMALL_BUDGET: [(&str, &str); 5] = [
    ("initial_samples = 50", "initial_samples = 10"),
    ("termination_iterations = 500", "termination_iterations = 10"),
    ("runs = 5", "runs = 2"),
    ("number_of_trees = 1000", "number_of_trees = 40"),
    ("agents = 5000", "agents = 600"),
];

fn init_small(dir: &Path) -> PathBuf {
    let cfg = dir.join("abm-calib.toml");
    commands::init(&cfg, false).unwrap();
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    for (from, to) in SMALL_BUDGET {
        assert!(text.contains(from), "template lacks {from}");
        text = text.replacen(from, to, 1);
    }
    // Targets were written for the default population; regenerate them for
    // the smaller one so the scenario matches.
    std::fs::write(&cfg, &text).unwrap();
    regenerate_targets(&cfg);
    cfg
}

fn regenerate_targets(cfg_path: &Path) {
    use abm_calib_core::simulators::files::{read_params, write_summary_dir};
    use abm_calib_core::simulators::Simulator;
    let cfg = ToolConfig::load(cfg_path).unwrap();
    let space = abm_calib_core::space::ParameterSpace::read_csv(&cfg.paths.space).unwrap();
    let sim = commands::toy_simulator(&cfg.simulator.toy.clone().unwrap(), &space).unwrap();
    let theta = read_params(&cfg_path.parent().unwrap().join(THETA_STAR_FILE), &space).unwrap();
    write_summary_dir(&cfg.paths.targets, &sim.simulate(&theta).unwrap()).unwrap();
}

fn write_benchmark_config(dir: &Path) -> PathBuf {
    let text = abm_calib::config::TEMPLATE
        .replace("kind = \"toy\"", "kind = \"benchmark\"")
        .replace(
            "# [simulator.benchmark]\n# function = \"sphere\"   # sphere, rosenbrock or rastrigin\n# dimension = 5\n# lower = -2.0\n# upper = 2.0",
            "[simulator.benchmark]\nfunction = \"sphere\"\ndimension = 5\nlower = -2.0\nupper = 2.0",
        )
        .replace("initial_samples = 50", "initial_samples = 20")
        .replace("termination_iterations = 500", "termination_iterations = 30")
        .replace("runs = 5", "runs = 1")
        .replace("number_of_trees = 1000", "number_of_trees = 100");
    let path = dir.join("bench.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_trace(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let runs = lines.next().unwrap().split(',').count() - 1;
    let mut cols = vec![Vec::new(); runs];
    for line in lines {
        for (k, cell) in line.split(',').skip(1).enumerate() {
            if !cell.is_empty() {
                cols[k].push(cell.parse().unwrap());
            }
        }
    }
    cols
}

#[test]
fn init_writes_files_and_guards_against_clobbering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("abm-calib.toml");
    let written = commands::init(&cfg, false).unwrap();
    for p in &written {
        assert!(p.is_file(), "{} missing", p.display());
    }
    let space = std::fs::read_to_string(tmp.path().join("space.csv")).unwrap();
    assert_eq!(space.lines().count(), 25);

    match commands::init(&cfg, false) {
        Err(CliError::Config(problems)) => assert_eq!(problems.len(), written.len()),
        other => panic!("expected a refusal, got {other:?}"),
    }
    commands::init(&cfg, true).unwrap();

    let parsed = ToolConfig::load(&cfg).unwrap();
    parsed.validate().unwrap();
    let reparsed = ToolConfig::parse(&parsed.to_toml(), "again").unwrap();
    assert_eq!(parsed, reparsed);
}

#[test]
fn evaluate_ground_truth_against_its_own_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("abm-calib.toml");
    commands::init(&cfg, false).unwrap();
    let out = commands::evaluate(&cfg, &tmp.path().join(THETA_STAR_FILE)).unwrap();
    let rows = read_report(out.as_bytes(), "stdout").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].eps_global, 0.0);
    assert_eq!(rows[0].modal_share_error, 0.0);

    // The printed row is valid pareto input.
    let report = tmp.path().join("one.csv");
    std::fs::write(&report, &out).unwrap();
    let (front, skipped) = commands::pareto(Some(&cfg), &[report]).unwrap();
    assert_eq!(skipped, 0);
    assert_eq!(read_report(front.as_bytes(), "front").unwrap(), rows);
}

#[test]
fn evaluate_names_missing_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("abm-calib.toml");
    commands::init(&cfg, false).unwrap();
    let full = std::fs::read_to_string(tmp.path().join(THETA_STAR_FILE)).unwrap();
    let partial: String = full
        .lines()
        .filter(|l| !l.starts_with("mode_cost,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let params = tmp.path().join("partial.csv");
    std::fs::write(&params, partial).unwrap();
    let err = commands::evaluate(&cfg, &params).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    assert!(err.to_string().contains("mode_cost"), "{err}");
}

#[test]
fn toy_calibration_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = init_small(tmp.path());
    let outcome = commands::calibrate(&cfg, &CalibrateOptions::default()).unwrap();
    assert!(outcome.failed_runs.is_empty());
    let out = tmp.path().join("output");
    for f in [BEST_FILE, TRACE_FILE, PARETO_FILE] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join(commands::LOCK_FILE).exists());

    let archives = commands::load_archives(&out).unwrap();
    assert_eq!(archives.len(), 2);
    let traces = read_trace(&out.join(TRACE_FILE));
    for (k, (_, records)) in archives.iter().enumerate() {
        assert_eq!(records.len(), 20);
        assert_eq!(traces[k], incumbent_trace(records));
        assert!(traces[k].windows(2).all(|w| w[1] <= w[0]));
    }

    let best = std::fs::read_to_string(out.join(BEST_FILE)).unwrap();
    assert_eq!(best.lines().count(), 25);
    let rows = read_report(std::fs::File::open(out.join(PARETO_FILE)).unwrap(), "report").unwrap();
    for r in &rows {
        assert!(r.modal_share_error <= 0.10);
    }

    // A second calibrate over the same output must be explicit.
    let err = commands::calibrate(&cfg, &CalibrateOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);

    // The report command reproduces the artifacts byte for byte.
    let trace_before = std::fs::read(out.join(TRACE_FILE)).unwrap();
    commands::report(&cfg).unwrap();
    assert_eq!(std::fs::read(out.join(TRACE_FILE)).unwrap(), trace_before);
}

#[test]
fn resume_matches_uninterrupted_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let full_dir = tmp.path().join("full");
    let part_dir = tmp.path().join("part");
    std::fs::create_dir_all(&full_dir).unwrap();
    std::fs::create_dir_all(&part_dir).unwrap();
    let full_cfg = write_benchmark_config(&full_dir);
    let part_cfg = write_benchmark_config(&part_dir);
    commands::calibrate(&full_cfg, &CalibrateOptions::default()).unwrap();

    let text = std::fs::read_to_string(&part_cfg).unwrap();
    std::fs::write(&part_cfg, text.replace("termination_iterations = 30", "termination_iterations = 12")).unwrap();
    commands::calibrate(&part_cfg, &CalibrateOptions::default()).unwrap();
    std::fs::write(&part_cfg, text).unwrap();
    let resume = CalibrateOptions {
        resume: true,
        ..Default::default()
    };
    commands::calibrate(&part_cfg, &resume).unwrap();

    for f in ["run_0/archive.jsonl", TRACE_FILE, BEST_FILE] {
        let a = std::fs::read(full_dir.join("output").join(f)).unwrap();
        let b = std::fs::read(part_dir.join("output").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs after resume");
    }
}

#[test]
fn benchmark_binding_scores_sphere_in_parameter_space() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_benchmark_config(tmp.path());
    commands::calibrate(&cfg, &CalibrateOptions::default()).unwrap();
    let out = tmp.path().join("output");
    let archives = commands::load_archives(&out).unwrap();
    let records = &archives[&0];
    assert_eq!(records.len(), 50);
    for r in records {
        let theta = &r.theta.0;
        assert!(theta.iter().all(|v| (-2.0..=2.0).contains(v)));
        let oracle: f64 = theta.iter().map(|v| v * v).sum();
        assert!((r.eps_global() - oracle).abs() <= 1e-12 * oracle.max(1.0));
        for (u, v) in r.unit.0.iter().zip(theta) {
            assert!((-2.0 + 4.0 * u - v).abs() <= 1e-12);
        }
    }
    let best = std::fs::read_to_string(out.join(BEST_FILE)).unwrap();
    assert_eq!(best.lines().count(), 6);
}

#[test]
fn lock_file_blocks_a_second_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_benchmark_config(tmp.path());
    let out = tmp.path().join("output");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(commands::LOCK_FILE), "1\n").unwrap();
    let err = commands::calibrate(&cfg, &CalibrateOptions::default()).unwrap_err();
    assert!(err.to_string().contains("locked"), "{err}");
}

#[test]
fn binary_reports_config_errors_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = abm_calib::config::TEMPLATE
        .replace("initial_samples = 50", "initial_samples = 1")
        .replace("number_of_trees = 1000", "number_of_trees = 0");
    std::fs::write(&cfg, text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_abm-calib"))
        .args(["--quiet", "calibrate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let stderr = String::from_utf8_lossy(&out.stderr);
    // Every problem is listed, not just the first.
    for needle in ["initial sample", "tree", "space file", "targets directory"] {
        assert!(stderr.contains(needle), "missing {needle:?} in {stderr}");
    }
}

#[test]
fn binary_end_to_end_on_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_benchmark_config(tmp.path());
    let bin = env!("CARGO_BIN_EXE_abm-calib");
    let out = Command::new(bin)
        .args(["--quiet", "calibrate", "--seed", "3", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("best overall"));

    let report = tmp.path().join("output").join(PARETO_FILE);
    let out = Command::new(bin).arg("pareto").arg(&report).output().unwrap();
    assert!(out.status.success());
}
