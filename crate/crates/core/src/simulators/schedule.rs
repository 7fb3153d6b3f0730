//! Daily activity schedule rows and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Mode, ODMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TourType {
    Work,
    Education,
    Shop,
    Other,
}

impl TourType {
    pub const ALL: [TourType; 4] = [
        TourType::Work,
        TourType::Education,
        TourType::Shop,
        TourType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TourType::Work => "Work",
            TourType::Education => "Education",
            TourType::Shop => "Shop",
            TourType::Other => "Other",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopType {
    Work,
    Education,
    Shop,
    Other,
    Home,
}

impl From<TourType> for StopType {
    fn from(t: TourType) -> Self {
        match t {
            TourType::Work => StopType::Work,
            TourType::Education => StopType::Education,
            TourType::Shop => StopType::Shop,
            TourType::Other => StopType::Other,
        }
    }
}

mod mode_label {
    use super::Mode;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.schedule_label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mode, D::Error> {
        let s = String::deserialize(d)?;
        Mode::from_key(&s).ok_or_else(|| D::Error::custom(format!("unknown mode {s:?}")))
    }
}

mod py_bool {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *b { "True" } else { "False" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "True" | "true" => Ok(true),
            "False" | "false" => Ok(false),
            other => Err(D::Error::custom(format!("not a boolean: {other:?}"))),
        }
    }
}

/// One stop of a tour. Times are decimal hours on the half-hour grid
/// starting at 3.25 and ending at 26.75.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub person_id: u64,
    pub tour_no: u32,
    pub tour_type: TourType,
    pub stop_no: u32,
    pub stop_type: StopType,
    pub stop_location: u32,
    #[serde(with = "mode_label")]
    pub stop_mode: Mode,
    #[serde(with = "py_bool")]
    pub primary_stop: bool,
    pub arrival_time: f64,
    pub departure_time: f64,
    pub prev_stop_location: u32,
    pub prev_stop_departure_time: f64,
}

pub const DAY_START: f64 = 3.25;
pub const DAY_END: f64 = 26.75;

/// True when `t` is a half-hour grid point inside the simulated day.
pub fn on_time_grid(t: f64) -> bool {
    let k = (t - DAY_START) * 2.0;
    (DAY_START..=DAY_END).contains(&t) && (k - k.round()).abs() < 1e-9
}

/// Rebuilds the district OD matrix from schedule rows.
pub fn od_from_rows(rows: &[ScheduleRow], district_of: &[usize], n_districts: usize) -> ODMatrix {
    let mut od = ODMatrix::zeros(n_districts);
    for r in rows {
        od.add(
            district_of[r.prev_stop_location as usize],
            district_of[r.stop_location as usize],
            1.0,
        );
    }
    od
}

pub fn write_rows<W: Write>(rows: &[ScheduleRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("schedules.csv", e))
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<ScheduleRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse("schedules.csv", i + 2, e.to_string())))
        .collect()
}

pub fn write_file(rows: &[ScheduleRow], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
