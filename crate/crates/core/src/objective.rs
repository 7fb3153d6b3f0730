//! Discrepancy between simulated and observed outputs: the product of an
//! OD-matrix term, a mode-share term and a worker-coverage term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulators::schedule::ScheduleRow;

/// Transport modes, in the fixed order used by every file and vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Public,
    Car,
    Walk,
    Other,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Public, Mode::Car, Mode::Walk, Mode::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Key used in `modes.csv`.
    pub fn key(self) -> &'static str {
        match self {
            Mode::Public => "public",
            Mode::Car => "car",
            Mode::Walk => "walk",
            Mode::Other => "other",
        }
    }

    /// Label used in schedule rows.
    pub fn schedule_label(self) -> &'static str {
        match self {
            Mode::Public => "PT",
            Mode::Car => "car",
            Mode::Walk => "walk",
            Mode::Other => "other",
        }
    }

    pub fn from_key(s: &str) -> Option<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.key() == s || m.schedule_label() == s)
    }
}

/// Daily tour-leg counts between districts; row = origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ODMatrix {
    n: usize,
    counts: Vec<f64>,
}

impl ODMatrix {
    pub fn zeros(n: usize) -> Self {
        ODMatrix {
            n,
            counts: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("OD matrix is empty"));
        }
        let mut counts = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "OD row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!("OD entry {v} is not a non-negative count")));
            }
            counts.extend(row);
        }
        Ok(ODMatrix { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        self.counts[origin * self.n + dest]
    }

    pub fn add(&mut self, origin: usize, dest: usize, v: f64) {
        self.counts[origin * self.n + dest] += v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.counts.chunks(self.n)
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Legs departing each district.
    pub fn origin_totals(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// Applies the district relabelling `perm[i] -> i`.
    pub fn permuted(&self, perm: &[usize]) -> ODMatrix {
        let mut out = ODMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.counts[i * self.n + j] = self.get(perm[i], perm[j]);
            }
        }
        out
    }
}

/// How far a share vector may sum from one. Published shares are rounded
/// per mode, so a row from a report table rarely adds up exactly.
pub const SHARE_SUM_TOLERANCE: f64 = 0.01;

/// Mode shares ordered as (public, car, walk, other).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeShares(pub [f64; 4]);

impl ModeShares {
    pub const UNIFORM: ModeShares = ModeShares([0.25; 4]);

    pub fn new(shares: [f64; 4]) -> Result<Self> {
        let s = ModeShares(shares);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mode share {v} outside [0, 1]")));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(Error::invalid(format!("mode shares sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Shares from trip counts. `None` when there are no trips at all.
    pub fn from_counts(counts: [f64; 4]) -> Option<Self> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(ModeShares(counts.map(|c| c / total)))
    }

    pub fn get(&self, mode: Mode) -> f64 {
        self.0[mode.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerCoverage {
    pub assigned: u64,
    pub total: u64,
}

impl WorkerCoverage {
    pub fn new(assigned: u64, total: u64) -> Result<Self> {
        let w = WorkerCoverage { assigned, total };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::invalid("worker total must be positive"));
        }
        if self.assigned > self.total {
            return Err(Error::invalid(format!(
                "{} assigned workers exceed total {}",
                self.assigned, self.total
            )));
        }
        Ok(())
    }
}

/// District-level counts used only by the ex-post criteria.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxCounts {
    /// Work legs arriving at each district's primary stops.
    pub work_legs_by_district: Vec<f64>,
    /// Education legs arriving at each district's primary stops.
    pub education_legs_by_district: Vec<f64>,
    /// Leg totals keyed by tour type.
    pub legs_by_type: BTreeMap<String, f64>,
}

/// Output of one simulator run, reduced to what the objective and criteria
/// consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub od: ODMatrix,
    pub modes: ModeShares,
    pub workers: WorkerCoverage,
    /// Set when the run produced no trips; `modes` is then uniform.
    pub zero_trips: bool,
    pub schedules: Option<Vec<ScheduleRow>>,
    pub aux: Option<AuxCounts>,
}

/// The three discrepancy terms and their product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub eps_od: f64,
    pub eps_mode: f64,
    pub eps_workers: f64,
    pub eps_global: f64,
}

impl CostBreakdown {
    pub fn new(eps_od: f64, eps_mode: f64, eps_workers: f64) -> Self {
        CostBreakdown {
            eps_od,
            eps_mode,
            eps_workers,
            eps_global: eps_od * eps_mode * eps_workers,
        }
    }

    /// Wraps a scalar cost (benchmarks) so that the product identity still
    /// holds: the scalar takes the OD slot, the two floors are 1.
    pub fn scalar(cost: f64) -> Self {
        Self::new(cost, 1.0, 1.0)
    }
}

/// `(1/100) * sqrt((1/n) * sum_ij (od_ij - sim_ij)^2)`, `n` = district count.
pub fn epsilon_od(sim: &ODMatrix, obs: &ODMatrix) -> Result<f64> {
    if sim.n != obs.n {
        return Err(Error::DimensionMismatch {
            expected: obs.n,
            got: sim.n,
        });
    }
    let ss: f64 = sim
        .counts
        .iter()
        .zip(&obs.counts)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / obs.n as f64).sqrt() / 100.0)
}

/// `1 + ||sim - obs||_2` over the four mode shares.
pub fn epsilon_mode(sim: &ModeShares, obs: &ModeShares) -> Result<f64> {
    sim.validate()?;
    obs.validate()?;
    let ss: f64 = sim.0.iter().zip(&obs.0).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 + ss.sqrt())
}

/// `2 - assigned / total`.
pub fn epsilon_workers(w: &WorkerCoverage) -> Result<f64> {
    w.validate()?;
    Ok(2.0 - w.assigned as f64 / w.total as f64)
}

pub fn epsilon_global(sim: &SimulationSummary, targets: &SimulationSummary) -> Result<CostBreakdown> {
    Ok(CostBreakdown::new(
        epsilon_od(&sim.od, &targets.od)?,
        epsilon_mode(&sim.modes, &targets.modes)?,
        epsilon_workers(&sim.workers)?,
    ))
}
