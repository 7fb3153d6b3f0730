//! Ex-post robustness screening: six per-simulation criteria, feasibility
//! thresholds, and the non-dominated subset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{CostBreakdown, SimulationSummary};

pub const N_CRITERIA: usize = 6;

pub const CRITERION_NAMES: [&str; N_CRITERIA] = [
    "modal_share_error",
    "work_spatial_error",
    "education_spatial_error",
    "worker_count_error",
    "total_legs_error",
    "spatial_legs_error",
];

/// Six smaller-is-better criteria, in [`CRITERION_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CriterionVector(pub [f64; N_CRITERIA]);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoConfig {
    /// Per-criterion feasibility ceilings; `+inf` disables a ceiling.
    pub thresholds: [f64; N_CRITERIA],
}

impl Default for ParetoConfig {
    fn default() -> Self {
        let mut thresholds = [f64::INFINITY; N_CRITERIA];
        thresholds[0] = 0.10;
        ParetoConfig { thresholds }
    }
}

impl ParetoConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::invalid(format!("pareto threshold {t} must be > 0")));
        }
        Ok(())
    }

    pub fn feasible(&self, c: &CriterionVector) -> bool {
        c.0.iter().zip(&self.thresholds).all(|(v, t)| v <= t)
    }
}

fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

pub fn compute_criteria(sim: &SimulationSummary, targets: &SimulationSummary) -> Result<CriterionVector> {
    let (Some(sa), Some(ta)) = (&sim.aux, &targets.aux) else {
        return Err(Error::invalid("criteria need district-level auxiliary counts"));
    };
    if sim.od.n() != targets.od.n() {
        return Err(Error::DimensionMismatch {
            expected: targets.od.n(),
            got: sim.od.n(),
        });
    }
    let modal = sim
        .modes
        .0
        .iter()
        .zip(&targets.modes.0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CriterionVector([
        modal,
        rmse(&sa.work_legs_by_district, &ta.work_legs_by_district)?,
        rmse(&sa.education_legs_by_district, &ta.education_legs_by_district)?,
        (sim.workers.assigned as f64 - targets.workers.assigned as f64).abs(),
        (sim.od.total() - targets.od.total()).abs(),
        rmse(&sim.od.origin_totals(), &targets.od.origin_totals())?,
    ]))
}

/// `a` is no worse everywhere and strictly better somewhere.
pub fn dominates(a: &CriterionVector, b: &CriterionVector) -> bool {
    let mut strictly = false;
    for (x, y) in a.0.iter().zip(&b.0) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Minimal view of an archive entry for front extraction.
pub trait ParetoCandidate {
    fn criteria(&self) -> Option<&CriterionVector>;
    fn eps_global(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoFront<T> {
    pub members: Vec<T>,
    /// No candidate survived the feasibility filter.
    pub empty_feasible_set: bool,
}

/// Indices of the non-dominated vectors among `vectors` (identical vectors
/// are all kept). Sorting by the first coordinate lets each candidate be
/// compared only against vectors that could dominate it.
pub fn nondominated_indices(vectors: &[CriterionVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| {
        vectors[a]
            .0
            .iter()
            .zip(&vectors[b].0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // A dominator precedes its victim in lexicographic order.
    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        if !front.iter().any(|&j| dominates(&vectors[j], &vectors[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Filters infeasible records, then keeps the non-dominated ones, ordered
/// by `eps_global` ascending (stable for ties).
pub fn pareto_front<T: ParetoCandidate + Clone>(records: &[T], cfg: &ParetoConfig) -> ParetoFront<T> {
    let feasible: Vec<&T> = records
        .iter()
        .filter(|r| r.criteria().is_some_and(|c| cfg.feasible(c)))
        .collect();
    if feasible.is_empty() {
        return ParetoFront {
            members: Vec::new(),
            empty_feasible_set: true,
        };
    }
    let vectors: Vec<CriterionVector> = feasible.iter().map(|r| *r.criteria().expect("filtered")).collect();
    let mut members: Vec<T> = nondominated_indices(&vectors)
        .into_iter()
        .map(|i| feasible[i].clone())
        .collect();
    members.sort_by(|a, b| a.eps_global().total_cmp(&b.eps_global()));
    ParetoFront {
        members,
        empty_feasible_set: false,
    }
}

/// One `pareto_report.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: u64,
    pub iteration: u64,
    pub eps_od: f64,
    pub eps_mode: f64,
    pub eps_workers: f64,
    pub eps_global: f64,
    pub modal_share_error: f64,
    pub work_spatial_error: f64,
    pub education_spatial_error: f64,
    pub worker_count_error: f64,
    pub total_legs_error: f64,
    pub spatial_legs_error: f64,
}

impl ReportRow {
    pub fn new(run_id: u64, iteration: u64, cost: &CostBreakdown, c: &CriterionVector) -> Self {
        ReportRow {
            run_id,
            iteration,
            eps_od: cost.eps_od,
            eps_mode: cost.eps_mode,
            eps_workers: cost.eps_workers,
            eps_global: cost.eps_global,
            modal_share_error: c.0[0],
            work_spatial_error: c.0[1],
            education_spatial_error: c.0[2],
            worker_count_error: c.0[3],
            total_legs_error: c.0[4],
            spatial_legs_error: c.0[5],
        }
    }

    pub fn criteria_vector(&self) -> CriterionVector {
        CriterionVector([
            self.modal_share_error,
            self.work_spatial_error,
            self.education_spatial_error,
            self.worker_count_error,
            self.total_legs_error,
            self.spatial_legs_error,
        ])
    }
}

/// Front over report rows (as produced by single evaluations or a previous
/// report).
pub fn pareto_front_rows(rows: &[ReportRow], cfg: &ParetoConfig) -> ParetoFront<ReportRow> {
    #[derive(Clone)]
    struct Wrapped(ReportRow, CriterionVector);
    impl ParetoCandidate for Wrapped {
        fn criteria(&self) -> Option<&CriterionVector> {
            Some(&self.1)
        }
        fn eps_global(&self) -> f64 {
            self.0.eps_global
        }
    }
    let wrapped: Vec<Wrapped> = rows
        .iter()
        .map(|r| Wrapped(r.clone(), r.criteria_vector()))
        .collect();
    let front = pareto_front(&wrapped, cfg);
    ParetoFront {
        members: front.members.into_iter().map(|w| w.0).collect(),
        empty_feasible_set: front.empty_feasible_set,
    }
}

pub fn write_report<W: std::io::Write>(rows: &[ReportRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record([
            "run_id",
            "iteration",
            "eps_od",
            "eps_mode",
            "eps_workers",
            "eps_global",
            CRITERION_NAMES[0],
            CRITERION_NAMES[1],
            CRITERION_NAMES[2],
            CRITERION_NAMES[3],
            CRITERION_NAMES[4],
            CRITERION_NAMES[5],
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("pareto_report.csv", e))
}

pub fn read_report<R: std::io::Read>(r: R, label: &str) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(label, i + 2, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{AuxCounts, ModeShares, ODMatrix, WorkerCoverage};

    fn cv(v: [f64; 6]) -> CriterionVector {
        CriterionVector(v)
    }

    #[derive(Clone, Debug, PartialEq)]
    struct Rec(usize, f64, Option<CriterionVector>);
    impl ParetoCandidate for Rec {
        fn criteria(&self) -> Option<&CriterionVector> {
            self.2.as_ref()
        }
        fn eps_global(&self) -> f64 {
            self.1
        }
    }

    #[test]
    fn dominance_examples() {
        let a = cv([1.0; 6]);
        let b = cv([2.0; 6]);
        assert!(dominates(&a, &b));
        assert!(!dominates(&b, &a));
        let c = cv([1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let d = cv([2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(!dominates(&c, &d) && !dominates(&d, &c));
        assert!(!dominates(&a, &a));
    }

    #[test]
    fn singleton_and_threshold_filter() {
        let cfg = ParetoConfig::default();
        let one = vec![Rec(0, 1.0, Some(cv([0.05, 1.0, 1.0, 1.0, 1.0, 1.0])))];
        assert_eq!(pareto_front(&one, &cfg).members, one);

        let recs = vec![
            Rec(0, 1.0, Some(cv([0.15, 0.0, 0.0, 0.0, 0.0, 0.0]))),
            Rec(1, 2.0, Some(cv([0.05, 9.0, 9.0, 9.0, 9.0, 9.0]))),
        ];
        let front = pareto_front(&recs, &cfg);
        assert_eq!(front.members, vec![recs[1].clone()]);

        let infeasible = vec![Rec(0, 1.0, Some(cv([0.5; 6]))), Rec(1, 1.0, None)];
        let front = pareto_front(&infeasible, &cfg);
        assert!(front.members.is_empty() && front.empty_feasible_set);
    }

    #[test]
    fn ties_are_retained_and_sorted() {
        let recs = vec![
            Rec(0, 3.0, Some(cv([0.01; 6]))),
            Rec(1, 1.0, Some(cv([0.01; 6]))),
            Rec(2, 2.0, Some(cv([0.02; 6]))),
        ];
        let front = pareto_front(&recs, &ParetoConfig::default());
        assert_eq!(front.members.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 0]);
    }

    fn summary(modes: [f64; 4], od: Vec<Vec<f64>>, assigned: u64, work: Vec<f64>) -> SimulationSummary {
        SimulationSummary {
            od: ODMatrix::from_rows(od).unwrap(),
            modes: ModeShares::new(modes).unwrap(),
            workers: WorkerCoverage::new(assigned, 100).unwrap(),
            zero_trips: false,
            schedules: None,
            aux: Some(AuxCounts {
                education_legs_by_district: vec![1.0; work.len()],
                work_legs_by_district: work,
                ..Default::default()
            }),
        }
    }

    #[test]
    fn criteria_examples() {
        let t = summary([0.25, 0.25, 0.25, 0.25], vec![vec![10.0, 0.0], vec![0.0, 10.0]], 50, vec![4.0, 6.0]);
        assert_eq!(compute_criteria(&t, &t).unwrap(), cv([0.0; 6]));

        let s = summary([0.27, 0.20, 0.28, 0.25], vec![vec![13.0, 1.0], vec![0.0, 10.0]], 47, vec![4.0, 2.0]);
        let c = compute_criteria(&s, &t).unwrap();
        assert!((c.0[0] - 0.05).abs() < 1e-12);
        assert!((c.0[1] - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.0[2], 0.0);
        assert_eq!(c.0[3], 3.0);
        assert_eq!(c.0[4], 4.0);
        assert!((c.0[5] - 8f64.sqrt()).abs() < 1e-12);

        let mut no_aux = t.clone();
        no_aux.aux = None;
        assert!(compute_criteria(&no_aux, &t).is_err());
    }

    #[test]
    fn total_legs_reference_value() {
        // 117093 simulated vs 112481 baseline legs.
        let s = summary([0.25; 4], vec![vec![117093.0]], 1, vec![0.0]);
        let t = summary([0.25; 4], vec![vec![112481.0]], 1, vec![0.0]);
        assert_eq!(compute_criteria(&s, &t).unwrap().0[4], 4612.0);
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![ReportRow::new(
            1,
            7,
            &CostBreakdown::new(0.5, 1.1, 1.2),
            &cv([0.01, 1.0, 2.0, 3.0, 4.0, 5.0]),
        )];
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("run_id,iteration,eps_od"));
        assert_eq!(read_report(&buf[..], "r").unwrap(), rows);
        let front = pareto_front_rows(&rows, &ParetoConfig::default());
        assert_eq!(front.members, rows);
    }
}
