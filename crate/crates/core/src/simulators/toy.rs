//! Toy nested-logit activity-based microsimulator.
//!
//! Each agent makes a binary travel / stay-home choice whose utility carries
//! the logsum of the mode level upward, then (if travelling) one tour to its
//! work place, school, or a logit-chosen discretionary destination, then a
//! mode. Times come from fixed per-tour-type windows on the half-hour grid.
//! Every agent draws from its own stream keyed by `(seed, agent id)`, so the
//! output does not depend on how agents are scheduled.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::objective::{AuxCounts, Mode, ModeShares, ODMatrix, SimulationSummary, WorkerCoverage};
use crate::rng::{self, Rng};
use crate::simulators::schedule::{ScheduleRow, StopType, TourType, DAY_END};
use crate::simulators::Simulator;
use crate::space::{ParameterSpace, ParameterSpec, ParameterVector};

/// Samples index `i` with probability `exp(u_i) / sum_j exp(u_j)`.
/// `-inf` entries are unavailable alternatives.
pub fn logit_choice(utilities: &[f64], rng: &mut Rng) -> Result<usize> {
    if utilities.is_empty() {
        return Err(Error::invalid("logit choice over zero alternatives"));
    }
    if utilities.iter().any(|u| u.is_nan() || *u == f64::INFINITY) {
        return Err(Error::invalid("logit utilities must be finite or -inf"));
    }
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::invalid("every alternative is unavailable"));
    }
    let weights: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        last = i;
        if draw < *w {
            return Ok(i);
        }
        draw -= w;
    }
    Ok(last)
}

/// `ln sum exp(u)` with max shift; `-inf` when nothing is available.
fn logsum(utilities: &[f64]) -> f64 {
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + utilities.iter().map(|u| (u - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub employed: bool,
    pub student: bool,
    pub female: bool,
    pub age_category: u8,
    /// Monthly income, thousands.
    pub income: f64,
    pub cars_in_household: u32,
    pub home_zone: u32,
    pub work_zone: Option<u32>,
    pub school_zone: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: u32,
    pub district: usize,
    pub x_km: f64,
    pub y_km: f64,
    /// Attraction mass for destination choice.
    pub size: f64,
}

/// Utility terms housed by the toy model, in layout order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
enum Term {
    DpAge0,
    DpAge1,
    DpAge2,
    DpAge3,
    DpAge4,
    DpFemale,
    DpIncome,
    DpEmployed,
    ConstPt,
    ConstWalk,
    ConstOther,
    TtPt,
    TtCar,
    TtWalk,
    TtOther,
    Cost,
    CostOverIncome,
    CarsPt,
    CarsWalk,
    CarsOther,
    DestTravelTime,
    DestSize,
    DestLogsum,
    DayPatternLogsum,
}

const N_TERMS: usize = 24;

/// Names of the housed terms with `(lower, upper, initial, reference)`
/// values. The reference column is the documented ground truth used to
/// generate toy targets.
pub const TOY_PARAMETERS: [(&str, f64, f64, f64, f64); N_TERMS] = [
    ("dp_age_0", -3.0, 3.0, 0.0, 1.0),
    ("dp_age_1", -3.0, 3.0, 0.5, 1.5),
    ("dp_age_2", -3.0, 3.0, 0.5, 1.2),
    ("dp_age_3", -3.0, 3.0, 0.0, 0.8),
    ("dp_age_4", -3.0, 3.0, -0.5, -0.2),
    ("dp_female_travel", -2.0, 2.0, 0.0, 0.3),
    ("dp_income", -1.0, 1.0, 0.0, 0.15),
    ("dp_employment_status", -2.0, 4.0, 0.5, 2.0),
    ("mode_cons_pt", -3.0, 3.0, 0.0, 0.4),
    ("mode_cons_walk", -3.0, 3.0, 0.0, 0.8),
    ("mode_cons_other", -4.0, 2.0, -1.0, -2.0),
    ("mode_tt_pt", -0.2, 0.0, -0.05, -0.04),
    ("mode_tt_car", -0.2, 0.0, -0.05, -0.06),
    ("mode_tt_walk", -0.2, 0.0, -0.05, -0.08),
    ("mode_tt_other", -0.2, 0.0, -0.05, -0.05),
    ("mode_cost", -1.5, 0.0, -0.3, -0.4),
    ("mode_cost_over_income", -1.5, 0.0, -0.3, -0.2),
    ("mode_cars_pt", -2.0, 2.0, 0.0, -0.6),
    ("mode_cars_walk", -2.0, 2.0, 0.0, -0.4),
    ("mode_cars_other", -2.0, 2.0, 0.0, -0.2),
    ("dest_tt", -0.3, 0.0, -0.05, -0.08),
    ("dest_size", -1.0, 3.0, 0.5, 1.0),
    ("dest_logsum", -1.0, 2.0, 0.5, 0.6),
    ("dp_logsum", -1.0, 2.0, 0.5, 0.3),
];

/// Names the parameters that feed the binary travel/stay-home choice.
pub const DAY_PATTERN_TERMS: [&str; 8] = [
    "dp_age_0",
    "dp_age_1",
    "dp_age_2",
    "dp_age_3",
    "dp_age_4",
    "dp_female_travel",
    "dp_income",
    "dp_employment_status",
];

/// Maps parameter names onto the model's utility terms. Inert names are
/// accepted and ignored (used for high-dimensional stress layouts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaLayout {
    pub live: Vec<String>,
    pub inert: Vec<String>,
}

impl BetaLayout {
    /// The 24-parameter layout.
    pub fn standard() -> Self {
        BetaLayout {
            live: TOY_PARAMETERS.iter().map(|p| p.0.to_string()).collect(),
            inert: Vec::new(),
        }
    }

    /// The standard layout padded with inert parameters up to `total` names.
    pub fn padded(total: usize) -> Self {
        let mut layout = Self::standard();
        let extra = total.saturating_sub(N_TERMS);
        layout.inert = (0..extra).map(|i| format!("inert_{i:03}")).collect();
        layout
    }

    pub fn dimension(&self) -> usize {
        self.live.len() + self.inert.len()
    }

    /// Parameter space with the documented bounds; inert names get `[-5, 5]`.
    pub fn space(&self) -> ParameterSpace {
        let mut specs: Vec<ParameterSpec> = TOY_PARAMETERS
            .iter()
            .map(|&(n, lo, hi, init, _)| ParameterSpec::new(n, lo, hi, init).expect("valid bounds"))
            .collect();
        specs.extend(
            self.inert
                .iter()
                .map(|n| ParameterSpec::around_initial(n.clone(), 0.0, 5.0).expect("valid bounds")),
        );
        ParameterSpace::new(specs).expect("unique names")
    }

    /// Documented ground-truth vector aligned with [`BetaLayout::space`].
    pub fn reference_theta(&self) -> ParameterVector {
        let mut v: Vec<f64> = TOY_PARAMETERS.iter().map(|p| p.4).collect();
        v.extend(std::iter::repeat(0.0).take(self.inert.len()));
        ParameterVector(v)
    }

    /// Positions of the live terms inside vectors laid out by `space`.
    fn resolve(&self, space: &ParameterSpace) -> Result<[usize; N_TERMS]> {
        let mut problems = Vec::new();
        let mut idx = [0usize; N_TERMS];
        for (t, name) in self.live.iter().enumerate() {
            match space.index_of(name) {
                Some(i) => idx[t] = i,
                None => problems.push(format!("missing {name}")),
            }
        }
        for name in space.names() {
            if !self.live.iter().any(|n| n == name) && !self.inert.iter().any(|n| n == name) {
                problems.push(format!("unknown {name}"));
            }
        }
        if self.live.len() != N_TERMS {
            problems.push(format!("layout has {} live terms, expected {N_TERMS}", self.live.len()));
        }
        if !problems.is_empty() {
            return Err(Error::invalid(format!(
                "parameter names do not match the toy layout: {}",
                problems.join(", ")
            )));
        }
        Ok(idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyScenarioConfig {
    pub n_agents: usize,
    /// Zones form a `grid x grid` square.
    pub grid: usize,
    /// Zone spacing in km.
    pub spacing_km: f64,
    pub population_seed: u64,
}

impl Default for ToyScenarioConfig {
    fn default() -> Self {
        ToyScenarioConfig {
            n_agents: 5000,
            grid: 4,
            spacing_km: 1.5,
            population_seed: 2015,
        }
    }
}

/// Synthetic population, zones and skims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyScenario {
    pub agents: Vec<Agent>,
    pub zones: Vec<Zone>,
    pub n_districts: usize,
    /// Minutes, indexed `[origin][dest][mode]` flattened.
    pub travel_time: Vec<f64>,
    /// Currency, same indexing as `travel_time`.
    pub travel_cost: Vec<f64>,
    pub layout: BetaLayout,
}

impl ToyScenario {
    pub fn generate(cfg: &ToyScenarioConfig) -> Result<Self> {
        if cfg.grid < 2 || cfg.n_agents == 0 {
            return Err(Error::invalid("toy scenario needs grid >= 2 and at least one agent"));
        }
        let g = cfg.grid;
        let half = g.div_ceil(2);
        let centre = (g as f64 - 1.0) * cfg.spacing_km / 2.0;
        let zones: Vec<Zone> = (0..g * g)
            .map(|i| {
                let (r, c) = (i / g, i % g);
                let (x, y) = (c as f64 * cfg.spacing_km, r as f64 * cfg.spacing_km);
                let dc = ((x - centre).powi(2) + (y - centre).powi(2)).sqrt();
                Zone {
                    id: i as u32,
                    district: (r / half) * 2 + (c / half),
                    x_km: x,
                    y_km: y,
                    size: 1.0 + 4.0 * (-dc / 1.5).exp(),
                }
            })
            .collect();
        let n_districts = 4;
        let nz = zones.len();

        let mut travel_time = vec![0.0; nz * nz * 4];
        let mut travel_cost = vec![0.0; nz * nz * 4];
        for (o, zo) in zones.iter().enumerate() {
            for (d, zd) in zones.iter().enumerate() {
                let dist = if o == d {
                    0.5
                } else {
                    ((zo.x_km - zd.x_km).powi(2) + (zo.y_km - zd.y_km).powi(2)).sqrt()
                };
                let base = (o * nz + d) * 4;
                let tt = [9.0 + 2.8 * dist, 4.0 + 2.0 * dist, 12.0 * dist, 5.0 + 2.2 * dist];
                let cost = [1.2, 0.5 + 0.3 * dist, 0.0, 0.15 * dist];
                travel_time[base..base + 4].copy_from_slice(&tt);
                travel_cost[base..base + 4].copy_from_slice(&cost);
            }
        }

        let mut rng = rng::rng_from(cfg.population_seed);
        let sizes: Vec<f64> = zones.iter().map(|z| z.size).collect();
        let pick_weighted = |rng: &mut Rng, w: &[f64]| -> u32 {
            let total: f64 = w.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    return i as u32;
                }
                u -= wi;
            }
            (w.len() - 1) as u32
        };
        let agents = (0..cfg.n_agents)
            .map(|id| {
                let age_category = rng.gen_range(0..5u8);
                let employed = rng.gen_bool([0.05, 0.7, 0.8, 0.65, 0.05][age_category as usize]);
                let student = rng.gen_bool([0.9, 0.15, 0.0, 0.0, 0.0][age_category as usize]);
                let income = if employed {
                    rng.gen_range(1.0..4.5)
                } else {
                    rng.gen_range(0.2..1.5)
                };
                let car_draw: f64 = rng.gen();
                let car_bias = (income - 1.0) * 0.08;
                let cars_in_household = if car_draw < 0.35 - car_bias {
                    0
                } else if car_draw < 0.85 - car_bias {
                    1
                } else {
                    2
                };
                let home_zone = rng.gen_range(0..nz as u32);
                let work_zone = employed.then(|| pick_weighted(&mut rng, &sizes));
                let school_zone = student.then(|| {
                    let h = &zones[home_zone as usize];
                    let w: Vec<f64> = zones
                        .iter()
                        .map(|z| {
                            let d = ((z.x_km - h.x_km).powi(2) + (z.y_km - h.y_km).powi(2)).sqrt();
                            z.size * (-d / 2.0).exp()
                        })
                        .collect();
                    pick_weighted(&mut rng, &w)
                });
                Agent {
                    id: id as u64,
                    employed,
                    student,
                    female: rng.gen_bool(0.5),
                    age_category,
                    income,
                    cars_in_household,
                    home_zone,
                    work_zone,
                    school_zone,
                }
            })
            .collect();

        let scenario = ToyScenario {
            agents,
            zones,
            n_districts,
            travel_time,
            travel_cost,
            layout: BetaLayout::standard(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn with_layout(mut self, layout: BetaLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nz = self.zones.len();
        if self.travel_time.len() != nz * nz * 4 || self.travel_cost.len() != nz * nz * 4 {
            return Err(Error::invalid("skim tables do not match the zone count"));
        }
        if self
            .travel_time
            .iter()
            .chain(&self.travel_cost)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::invalid("skims must be finite and non-negative"));
        }
        for a in &self.agents {
            if a.employed && a.work_zone.is_none() {
                return Err(Error::invalid(format!("employed agent {} has no work zone", a.id)));
            }
            if a.student && a.school_zone.is_none() {
                return Err(Error::invalid(format!("student agent {} has no school zone", a.id)));
            }
            if a.age_category > 4 {
                return Err(Error::invalid(format!("agent {} age category > 4", a.id)));
            }
        }
        if !self.agents.iter().any(|a| a.employed) {
            return Err(Error::invalid("scenario has no employed agents"));
        }
        Ok(())
    }

    pub fn district_of(&self) -> Vec<usize> {
        self.zones.iter().map(|z| z.district).collect()
    }

    #[inline]
    fn skim(&self, table: &[f64], o: u32, d: u32, mode: Mode) -> f64 {
        table[(o as usize * self.zones.len() + d as usize) * 4 + mode.index()]
    }
}

struct Betas([f64; N_TERMS]);

impl Betas {
    #[inline]
    fn get(&self, t: Term) -> f64 {
        self.0[t as usize]
    }
}

struct AgentTour {
    tour_type: TourType,
    dest: u32,
    mode: Mode,
    leave_home: f64,
    arrive_dest: f64,
    leave_dest: f64,
    arrive_home: f64,
}

fn mode_utilities(s: &ToyScenario, b: &Betas, a: &Agent, o: u32, d: u32) -> [f64; 4] {
    let cars = a.cars_in_household as f64;
    let income = a.income.max(1.0);
    let tt = |m| s.skim(&s.travel_time, o, d, m);
    let cost = |m| s.skim(&s.travel_cost, o, d, m);
    let money = |m| b.get(Term::Cost) * cost(m) + b.get(Term::CostOverIncome) * cost(m) / income;
    let pt = b.get(Term::ConstPt) + b.get(Term::TtPt) * tt(Mode::Public) + money(Mode::Public)
        + b.get(Term::CarsPt) * cars;
    let car = if a.cars_in_household >= 1 {
        b.get(Term::TtCar) * tt(Mode::Car) + money(Mode::Car)
    } else {
        f64::NEG_INFINITY
    };
    let walk = b.get(Term::ConstWalk) + b.get(Term::TtWalk) * tt(Mode::Walk) + b.get(Term::CarsWalk) * cars;
    let other = b.get(Term::ConstOther) + b.get(Term::TtOther) * tt(Mode::Other) + money(Mode::Other)
        + b.get(Term::CarsOther) * cars;
    [pt, car, walk, other]
}

/// Half-hour grid draw from `[lo, hi]` (both on the grid).
fn grid_time(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) * 2.0).round() as u32;
    lo + 0.5 * rng.gen_range(0..=steps) as f64
}

fn simulate_agent(s: &ToyScenario, b: &Betas, a: &Agent, seed: u64) -> Result<Option<AgentTour>> {
    let mut rng = rng::stream(seed, a.id);
    let home = a.home_zone;

    // Mandatory destination, or the best discretionary destination for the
    // logsum that feeds the day-pattern level.
    let (tour_type, dest_utils) = if a.employed {
        (Some(TourType::Work), None)
    } else if a.student {
        (Some(TourType::Education), None)
    } else {
        let utils: Vec<f64> = (0..s.zones.len() as u32)
            .map(|d| {
                let ls = logsum(&mode_utilities(s, b, a, home, d));
                b.get(Term::DestTravelTime) * s.skim(&s.travel_time, home, d, Mode::Car)
                    + b.get(Term::DestSize) * s.zones[d as usize].size.ln()
                    + b.get(Term::DestLogsum) * ls
            })
            .collect();
        (None, Some(utils))
    };
    let anchor = match (tour_type, &dest_utils) {
        (Some(TourType::Work), _) => a.work_zone.expect("validated"),
        (Some(_), _) => a.school_zone.expect("validated"),
        (None, Some(u)) => {
            let mut best = 0;
            for (i, v) in u.iter().enumerate() {
                if *v > u[best] {
                    best = i;
                }
            }
            best as u32
        }
        (None, None) => unreachable!(),
    };
    let anchor_ls = logsum(&mode_utilities(s, b, a, home, anchor));

    let age = [Term::DpAge0, Term::DpAge1, Term::DpAge2, Term::DpAge3, Term::DpAge4][a.age_category as usize];
    let u_travel = b.get(age)
        + b.get(Term::DpFemale) * f64::from(u8::from(a.female))
        + b.get(Term::DpIncome) * a.income
        + b.get(Term::DpEmployed) * f64::from(u8::from(a.employed))
        + b.get(Term::DayPatternLogsum) * anchor_ls;
    if logit_choice(&[u_travel, 0.0], &mut rng)? != 0 {
        return Ok(None);
    }

    let (tour_type, dest) = match (tour_type, dest_utils) {
        (Some(t), _) => (t, anchor),
        (None, Some(u)) => {
            let t = if rng.gen_bool(0.5) { TourType::Shop } else { TourType::Other };
            (t, logit_choice(&u, &mut rng)? as u32)
        }
        (None, None) => unreachable!(),
    };
    let mode = Mode::ALL[logit_choice(&mode_utilities(s, b, a, home, dest), &mut rng)?];

    let (window, stay) = match tour_type {
        TourType::Work => ((6.25, 9.25), (14, 19)),
        TourType::Education => ((7.25, 8.75), (8, 14)),
        TourType::Shop => ((9.25, 18.25), (1, 4)),
        TourType::Other => ((8.25, 19.25), (1, 6)),
    };
    let travel = 0.5 * (s.skim(&s.travel_time, home, dest, mode) / 30.0).round();
    let leave_home = grid_time(&mut rng, window.0, window.1);
    let arrive_dest = leave_home + travel;
    let leave_dest = arrive_dest + 0.5 * rng.gen_range(stay.0..=stay.1) as f64;
    let arrive_home = (leave_dest + travel).min(DAY_END);
    Ok(Some(AgentTour {
        tour_type,
        dest,
        mode,
        leave_home,
        arrive_dest,
        leave_dest,
        arrive_home,
    }))
}

/// Runs the toy model once. `space` supplies the names that `theta` is laid
/// out by; they must match the scenario's layout.
pub fn toy_simulate(
    scenario: &ToyScenario,
    space: &ParameterSpace,
    theta: &ParameterVector,
    seed: u64,
) -> Result<SimulationSummary> {
    toy_simulate_with(scenario, space, theta, seed, Execution::default(), true)
}

pub fn toy_simulate_with(
    scenario: &ToyScenario,
    space: &ParameterSpace,
    theta: &ParameterVector,
    seed: u64,
    exec: Execution,
    keep_schedules: bool,
) -> Result<SimulationSummary> {
    let idx = scenario.layout.resolve(space)?;
    if theta.len() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            got: theta.len(),
        });
    }
    let betas = Betas(idx.map(|i| theta.0[i]));
    let outcomes = exec.map_slice(&scenario.agents, |a| simulate_agent(scenario, &betas, a, seed));

    let district = scenario.district_of();
    let mut od = ODMatrix::zeros(scenario.n_districts);
    let mut mode_counts = [0.0; 4];
    let mut work_legs = vec![0.0; scenario.n_districts];
    let mut edu_legs = vec![0.0; scenario.n_districts];
    let mut legs_by_type: BTreeMap<String, f64> = TourType::ALL
        .iter()
        .map(|t| (t.label().to_string(), 0.0))
        .collect();
    let mut assigned = 0u64;
    let total_workers = scenario.agents.iter().filter(|a| a.employed).count() as u64;
    let mut rows = Vec::new();

    for (agent, outcome) in scenario.agents.iter().zip(outcomes) {
        let Some(tour) = outcome? else { continue };
        let (h, d) = (agent.home_zone, tour.dest);
        let (dh, dd) = (district[h as usize], district[d as usize]);
        od.add(dh, dd, 1.0);
        od.add(dd, dh, 1.0);
        mode_counts[tour.mode.index()] += 2.0;
        *legs_by_type.get_mut(tour.tour_type.label()).expect("all types present") += 2.0;
        match tour.tour_type {
            TourType::Work => {
                work_legs[dd] += 1.0;
                if agent.employed {
                    assigned += 1;
                }
            }
            TourType::Education => edu_legs[dd] += 1.0,
            _ => {}
        }
        if keep_schedules {
            rows.push(ScheduleRow {
                person_id: agent.id,
                tour_no: 1,
                tour_type: tour.tour_type,
                stop_no: 1,
                stop_type: StopType::from(tour.tour_type),
                stop_location: d,
                stop_mode: tour.mode,
                primary_stop: true,
                arrival_time: tour.arrive_dest,
                departure_time: tour.leave_dest,
                prev_stop_location: h,
                prev_stop_departure_time: tour.leave_home,
            });
            rows.push(ScheduleRow {
                person_id: agent.id,
                tour_no: 1,
                tour_type: tour.tour_type,
                stop_no: 2,
                stop_type: StopType::Home,
                stop_location: h,
                stop_mode: tour.mode,
                primary_stop: false,
                arrival_time: tour.arrive_home,
                departure_time: DAY_END,
                prev_stop_location: d,
                prev_stop_departure_time: tour.leave_dest,
            });
        }
    }

    let total_legs: f64 = mode_counts.iter().sum();
    legs_by_type.insert("Total".to_string(), total_legs);
    let (modes, zero_trips) = match ModeShares::from_counts(mode_counts) {
        Some(m) => (m, false),
        None => (ModeShares::UNIFORM, true),
    };
    Ok(SimulationSummary {
        od,
        modes,
        workers: WorkerCoverage::new(assigned, total_workers)?,
        zero_trips,
        schedules: keep_schedules.then_some(rows),
        aux: Some(AuxCounts {
            work_legs_by_district: work_legs,
            education_legs_by_district: edu_legs,
            legs_by_type,
        }),
    })
}

/// The toy model bound to a parameter space and a fixed simulator seed.
#[derive(Clone, Debug)]
pub struct ToySimulator {
    pub scenario: Arc<ToyScenario>,
    pub space: ParameterSpace,
    pub seed: u64,
    pub exec: Execution,
    pub keep_schedules: bool,
}

impl ToySimulator {
    pub fn new(scenario: Arc<ToyScenario>, space: ParameterSpace, seed: u64) -> Result<Self> {
        scenario.layout.resolve(&space)?;
        Ok(ToySimulator {
            scenario,
            space,
            seed,
            exec: Execution::default(),
            keep_schedules: false,
        })
    }
}

impl Simulator for ToySimulator {
    fn simulate(&self, theta: &ParameterVector) -> Result<SimulationSummary> {
        toy_simulate_with(
            &self.scenario,
            &self.space,
            theta,
            self.seed,
            self.exec,
            self.keep_schedules,
        )
    }
}
