//! File contract shared with external simulators: `params.csv` in,
//! `od.csv` / `modes.csv` / `workers.csv` (and optionally `aux.csv`,
//! `schedules.csv`) out.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::{AuxCounts, Mode, ModeShares, ODMatrix, SimulationSummary, WorkerCoverage};
use crate::simulators::schedule;
use crate::space::{ParameterSpace, ParameterVector};

pub const PARAMS_FILE: &str = "params.csv";
pub const OD_FILE: &str = "od.csv";
pub const MODES_FILE: &str = "modes.csv";
pub const WORKERS_FILE: &str = "workers.csv";
pub const AUX_FILE: &str = "aux.csv";
pub const SCHEDULES_FILE: &str = "schedules.csv";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn number(file: &str, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(file, line, format!("not a number: {s:?}")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn format_params(space: &ParameterSpace, theta: &ParameterVector) -> Result<String> {
    if theta.len() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: theta.len(),
        });
    }
    let mut out = String::from("name,value\n");
    for (name, v) in space.names().zip(&theta.0) {
        writeln!(out, "{name},{v}").expect("string write");
    }
    Ok(out)
}

pub fn parse_params(text: &str, space: &ParameterSpace, label: &str) -> Result<ParameterVector> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if fields(h) == ["name", "value"] => {}
        Some((n, _)) => return Err(Error::parse(label, n, "expected header name,value")),
        None => return Err(Error::parse(label, 1, "file is empty")),
    }
    let mut pairs = Vec::new();
    for (n, line) in lines {
        let f = fields(line);
        if f.len() != 2 {
            return Err(Error::parse(label, n, "expected name,value"));
        }
        pairs.push((f[0].to_string(), number(label, n, f[1])?));
    }
    space.vector_from_named(pairs.iter().map(|(k, v)| (k.as_str(), *v)))
}

pub fn write_params(path: &Path, space: &ParameterSpace, theta: &ParameterVector) -> Result<()> {
    write_text(path, &format_params(space, theta)?)
}

pub fn read_params(path: &Path, space: &ParameterSpace) -> Result<ParameterVector> {
    parse_params(&read_text(path)?, space, &path.display().to_string())
}

pub fn format_od(od: &ODMatrix) -> String {
    let ids: Vec<String> = (0..od.n()).map(|i| i.to_string()).collect();
    let mut out = ids.join(",");
    out.push('\n');
    for row in od.rows() {
        let r: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_od(text: &str) -> Result<ODMatrix> {
    let mut lines = content_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(OD_FILE, 1, "file is empty"))?;
    let n = fields(header).len();
    let mut rows = Vec::with_capacity(n);
    for (ln, line) in lines {
        let f = fields(line);
        if f.len() != n {
            return Err(Error::parse(
                OD_FILE,
                ln,
                format!("row has {} values, expected {n}", f.len()),
            ));
        }
        let row = f
            .iter()
            .map(|s| {
                let v = number(OD_FILE, ln, s)?;
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::parse(OD_FILE, ln, format!("negative count {v}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::parse(
            OD_FILE,
            rows.len() + 1,
            format!("{} data rows, expected {n}", rows.len()),
        ));
    }
    ODMatrix::from_rows(rows).map_err(|e| Error::parse(OD_FILE, 1, e.to_string()))
}

pub fn format_modes(m: &ModeShares) -> String {
    Mode::ALL
        .iter()
        .map(|mode| format!("{},{}\n", mode.key(), m.get(*mode)))
        .collect()
}

/// Accepts rows in any order. Shares are kept as written, so rounded
/// values from a report table score exactly as printed.
pub fn parse_modes(text: &str) -> Result<ModeShares> {
    let mut shares = [None; 4];
    let mut last = 0;
    for (ln, line) in content_lines(text) {
        last = ln;
        let f = fields(line);
        if f.len() != 2 {
            return Err(Error::parse(MODES_FILE, ln, "expected mode,share"));
        }
        let mode = Mode::from_key(f[0])
            .ok_or_else(|| Error::parse(MODES_FILE, ln, format!("unknown mode {:?}", f[0])))?;
        if shares[mode.index()].is_some() {
            return Err(Error::parse(MODES_FILE, ln, format!("mode {} repeated", f[0])));
        }
        let v = number(MODES_FILE, ln, f[1])?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parse(MODES_FILE, ln, format!("share {v} outside [0, 1]")));
        }
        shares[mode.index()] = Some(v);
    }
    let mut values = [0.0; 4];
    for (i, s) in shares.iter().enumerate() {
        values[i] = s.ok_or_else(|| {
            Error::parse(MODES_FILE, last + 1, format!("missing mode {}", Mode::ALL[i].key()))
        })?;
    }
    ModeShares::new(values).map_err(|e| Error::parse(MODES_FILE, last, e.to_string()))
}

pub fn format_workers(w: &WorkerCoverage) -> String {
    format!("{},{}\n", w.assigned, w.total)
}

/// One `assigned,total` row, optionally preceded by that literal header.
pub fn parse_workers(text: &str) -> Result<WorkerCoverage> {
    let mut data = content_lines(text).filter(|(_, l)| fields(l) != ["assigned", "total"]);
    let (ln, line) = data
        .next()
        .ok_or_else(|| Error::parse(WORKERS_FILE, 1, "file is empty"))?;
    if let Some((extra, _)) = data.next() {
        return Err(Error::parse(WORKERS_FILE, extra, "expected a single row"));
    }
    let f = fields(line);
    if f.len() != 2 {
        return Err(Error::parse(WORKERS_FILE, ln, "expected assigned,total"));
    }
    let int = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| Error::parse(WORKERS_FILE, ln, format!("not a count: {s:?}")))
    };
    WorkerCoverage::new(int(f[0])?, int(f[1])?).map_err(|e| Error::parse(WORKERS_FILE, ln, e.to_string()))
}

pub fn format_aux(aux: &AuxCounts) -> String {
    let mut out = String::from("district,work_legs,education_legs\n");
    for (i, (w, e)) in aux
        .work_legs_by_district
        .iter()
        .zip(&aux.education_legs_by_district)
        .enumerate()
    {
        writeln!(out, "{i},{w},{e}").expect("string write");
    }
    out
}

pub fn parse_aux(text: &str) -> Result<AuxCounts> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if fields(h) == ["district", "work_legs", "education_legs"] => {}
        Some((n, _)) => {
            return Err(Error::parse(AUX_FILE, n, "expected header district,work_legs,education_legs"))
        }
        None => return Err(Error::parse(AUX_FILE, 1, "file is empty")),
    }
    let mut aux = AuxCounts::default();
    for (expected, (ln, line)) in lines.enumerate() {
        let f = fields(line);
        if f.len() != 3 {
            return Err(Error::parse(AUX_FILE, ln, "expected 3 columns"));
        }
        if f[0] != expected.to_string() {
            return Err(Error::parse(AUX_FILE, ln, format!("expected district {expected}")));
        }
        aux.work_legs_by_district.push(number(AUX_FILE, ln, f[1])?);
        aux.education_legs_by_district.push(number(AUX_FILE, ln, f[2])?);
    }
    Ok(aux)
}

/// Reads a summary from a directory holding the output file set.
pub fn read_summary_dir(dir: &Path) -> Result<SimulationSummary> {
    let od = parse_od(&read_text(&dir.join(OD_FILE))?)?;
    let modes = parse_modes(&read_text(&dir.join(MODES_FILE))?)?;
    let workers = parse_workers(&read_text(&dir.join(WORKERS_FILE))?)?;
    let aux_path = dir.join(AUX_FILE);
    let aux = if aux_path.exists() {
        let aux = parse_aux(&read_text(&aux_path)?)?;
        if aux.work_legs_by_district.len() != od.n() {
            return Err(Error::parse(
                AUX_FILE,
                1,
                format!("{} districts, OD has {}", aux.work_legs_by_district.len(), od.n()),
            ));
        }
        Some(aux)
    } else {
        None
    };
    Ok(SimulationSummary {
        zero_trips: od.total() == 0.0,
        od,
        modes,
        workers,
        schedules: None,
        aux,
    })
}

/// Writes the output file set (plus `aux.csv` / `schedules.csv` when
/// available) into `dir`.
pub fn write_summary_dir(dir: &Path, s: &SimulationSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(OD_FILE), &format_od(&s.od))?;
    write_text(&dir.join(MODES_FILE), &format_modes(&s.modes))?;
    write_text(&dir.join(WORKERS_FILE), &format_workers(&s.workers))?;
    if let Some(aux) = &s.aux {
        write_text(&dir.join(AUX_FILE), &format_aux(aux))?;
    }
    if let Some(rows) = &s.schedules {
        schedule::write_file(rows, &dir.join(SCHEDULES_FILE))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;

    #[test]
    fn od_text_round_trip_and_shape_errors() {
        let od = ODMatrix::from_rows(vec![vec![1.5, 2.0], vec![0.0, 1e-3]]).unwrap();
        let text = format_od(&od);
        assert_eq!(text, "0,1\n1.5,2\n0,0.001\n");
        assert_eq!(parse_od(&text).unwrap(), od);

        let three_by_four = "0,1,2,3\n1,2,3,4\n1,2,3,4\n1,2,3,4\n";
        let err = parse_od(three_by_four).unwrap_err();
        assert!(err.to_string().contains("od.csv"), "{err}");
        let ragged = "0,1\n1,2\n1\n";
        assert!(matches!(parse_od(ragged), Err(Error::Parse { line: 3, .. })));
        assert!(parse_od("0,1\n1,-2\n3,4\n").is_err());
    }

    #[test]
    fn modes_and_workers() {
        let m = ModeShares::new([0.256, 0.488, 0.239, 0.017]).unwrap();
        let text = format_modes(&m);
        assert!(text.starts_with("public,0.256\ncar,0.488\n"));
        assert_eq!(parse_modes(&text).unwrap(), m);
        assert!(parse_modes("public,1\ncar,0\nwalk,0\n").is_err());
        assert!(parse_modes("public,0.5\ncar,0.6\nwalk,0\nother,0\n").is_err());
        assert!(parse_modes("bike,1\ncar,0\nwalk,0\nother,0\n").is_err());

        let w = WorkerCoverage::new(750, 1000).unwrap();
        assert_eq!(format_workers(&w), "750,1000\n");
        assert_eq!(parse_workers("750,1000\n").unwrap(), w);
        assert_eq!(parse_workers("assigned,total\n750,1000\n").unwrap(), w);
        assert!(parse_workers("1001,1000\n").is_err());
        assert!(parse_workers("1,2\n3,4\n").is_err());
    }

    #[test]
    fn params_name_checks() {
        let space = ParameterSpace::new(vec![
            ParameterSpec::new("beta_a", -1.0, 1.0, 0.0).unwrap(),
            ParameterSpec::new("beta_b", -1.0, 1.0, 0.0).unwrap(),
        ])
        .unwrap();
        let theta = ParameterVector(vec![0.1, -0.7]);
        let text = format_params(&space, &theta).unwrap();
        assert_eq!(text, "name,value\nbeta_a,0.1\nbeta_b,-0.7\n");
        assert_eq!(parse_params(&text, &space, "p").unwrap(), theta);
        let err = parse_params("name,value\nbeta_a,0.1\n", &space, "p")
            .unwrap_err()
            .to_string();
        assert!(err.contains("beta_b"), "{err}");
    }

    #[test]
    fn aux_round_trip() {
        let aux = AuxCounts {
            work_legs_by_district: vec![3.0, 4.0],
            education_legs_by_district: vec![1.0, 0.0],
            ..Default::default()
        };
        assert_eq!(parse_aux(&format_aux(&aux)).unwrap(), aux);
    }
}
