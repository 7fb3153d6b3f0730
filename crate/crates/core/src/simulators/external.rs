//! Adapter that runs a real simulator as a child process.
//!
//! Per call: write `params.csv` into the working directory, run the command
//! (placeholders `{params}` and `{workdir}` in arguments are substituted),
//! wait up to the timeout, then parse the output file set from the
//! working directory. The child's stdout and stderr go to `stdout.log` and
//! `stderr.log` beside the outputs.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::objective::SimulationSummary;
use crate::simulators::files::{self, MODES_FILE, OD_FILE, PARAMS_FILE, WORKERS_FILE};
use crate::simulators::Simulator;
use crate::space::{ParameterSpace, ParameterVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSimulatorConfig {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    pub workdir: PathBuf,
    pub timeout_seconds: f64,
}

impl ExternalSimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(Error::invalid("external simulator timeout must be > 0"));
        }
        if self.program.as_os_str().is_empty() {
            return Err(Error::invalid("external simulator program is empty"));
        }
        Ok(())
    }
}

const DIAGNOSTIC_TAIL: usize = 4000;

fn tail(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let start = text.len().saturating_sub(DIAGNOSTIC_TAIL);
    let start = (start..text.len()).find(|i| text.is_char_boundary(*i)).unwrap_or(text.len());
    text[start..].trim().to_string()
}

/// Runs the simulator once for `theta`.
pub fn external_evaluate(
    cfg: &ExternalSimulatorConfig,
    space: &ParameterSpace,
    theta: &ParameterVector,
) -> Result<SimulationSummary> {
    cfg.validate()?;
    let dir = &cfg.workdir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for stale in [OD_FILE, MODES_FILE, WORKERS_FILE, files::AUX_FILE] {
        let p = dir.join(stale);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    let params = dir.join(PARAMS_FILE);
    files::write_params(&params, space, theta)?;

    let subst = |a: &String| {
        a.replace("{params}", &params.display().to_string())
            .replace("{workdir}", &dir.display().to_string())
    };
    let stdout_path = dir.join("stdout.log");
    let stderr_path = dir.join("stderr.log");
    let stdout = File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
    let stderr = File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;
    let mut child = Command::new(&cfg.program)
        .args(cfg.args.iter().map(subst))
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::SimulatorFailure {
            status: "spawn failed".into(),
            diagnostics: format!("{}: {e}", cfg.program.display()),
        })?;

    let status = match child
        .wait_timeout(Duration::from_secs_f64(cfg.timeout_seconds))
        .map_err(|e| Error::io(&cfg.program, e))?
    {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Timeout {
                seconds: cfg.timeout_seconds,
            });
        }
    };
    if !status.success() {
        return Err(Error::SimulatorFailure {
            status: status.to_string(),
            diagnostics: tail(&stderr_path),
        });
    }
    files::read_summary_dir(dir)
}

#[derive(Clone, Debug)]
pub struct ExternalSimulator {
    pub config: ExternalSimulatorConfig,
    pub space: ParameterSpace,
}

impl Simulator for ExternalSimulator {
    fn simulate(&self, theta: &ParameterVector) -> Result<SimulationSummary> {
        external_evaluate(&self.config, &self.space, theta)
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;
    use std::os::unix::fs::PermissionsExt;

    fn script(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("sim.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![ParameterSpec::new("beta_tt", -1.0, 0.0, -0.5).unwrap()]).unwrap()
    }

    fn cfg(tmp: &Path, body: &str, timeout: f64) -> ExternalSimulatorConfig {
        ExternalSimulatorConfig {
            program: script(tmp, body),
            args: vec!["{params}".into()],
            workdir: tmp.join("work"),
            timeout_seconds: timeout,
        }
    }

    const GOOD: &str = r#"test -f "$1" || exit 9
printf '0,1\n10,2.5\n3,40\n' > od.csv
printf 'public,0.25\ncar,0.5\nwalk,0.2\nother,0.05\n' > modes.csv
printf '75,100\n' > workers.csv"#;

    #[test]
    fn fixture_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(tmp.path(), GOOD, 10.0);
        let s = external_evaluate(&c, &space(), &ParameterVector(vec![-0.25])).unwrap();
        assert_eq!(s.od.get(0, 0), 10.0);
        assert_eq!(s.od.get(0, 1), 2.5);
        assert_eq!(s.od.get(1, 1), 40.0);
        assert_eq!(s.modes.0, [0.25, 0.5, 0.2, 0.05]);
        assert_eq!((s.workers.assigned, s.workers.total), (75, 100));
        let params = std::fs::read_to_string(c.workdir.join("params.csv")).unwrap();
        assert_eq!(params, "name,value\nbeta_tt,-0.25\n");
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(tmp.path(), "echo 'solver diverged' >&2\nexit 1", 10.0);
        match external_evaluate(&c, &space(), &ParameterVector(vec![-0.5])) {
            Err(Error::SimulatorFailure { diagnostics, .. }) => {
                assert!(diagnostics.contains("solver diverged"))
            }
            other => panic!("expected simulator failure, got {other:?}"),
        }
    }

    #[test]
    fn timeout_kills_child() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(tmp.path(), "sleep 5", 0.2);
        assert!(matches!(
            external_evaluate(&c, &space(), &ParameterVector(vec![-0.5])),
            Err(Error::Timeout { .. })
        ));
    }

    #[test]
    fn malformed_od_names_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        let body = r#"printf '0,1,2,3\n1,2,3,4\n1,2,3,4\n1,2,3,4\n' > od.csv
printf 'public,0.25\ncar,0.5\nwalk,0.2\nother,0.05\n' > modes.csv
printf '75,100\n' > workers.csv"#;
        let c = cfg(tmp.path(), body, 10.0);
        let err = external_evaluate(&c, &space(), &ParameterVector(vec![-0.5])).unwrap_err();
        assert!(matches!(&err, Error::Parse { file, .. } if file == "od.csv"), "{err}");
    }

    #[test]
    fn stale_outputs_are_not_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(tmp.path(), GOOD, 10.0);
        external_evaluate(&c, &space(), &ParameterVector(vec![-0.5])).unwrap();
        let c2 = ExternalSimulatorConfig {
            program: script(tmp.path(), "exit 0"),
            ..c
        };
        assert!(external_evaluate(&c2, &space(), &ParameterVector(vec![-0.5])).is_err());
    }
}
