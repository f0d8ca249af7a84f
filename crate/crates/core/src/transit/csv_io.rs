//! `stops.csv` / `timetable.csv` reading and writing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mode, TransitNetwork};
use crate::error::{Error, Result};

pub const STOPS_HEADER: [&str; 5] = ["stop_id", "name", "lat", "lon", "mode"];
pub const TIMETABLE_HEADER: [&str; 7] = [
    "service_id",
    "run_id",
    "seq",
    "from_stop",
    "to_stop",
    "departure_min",
    "duration_min",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub stop_id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionRecord {
    pub service_id: String,
    pub run_id: String,
    pub seq: u32,
    pub from_stop: String,
    pub to_stop: String,
    pub departure_min: u32,
    pub duration_min: u32,
}

fn parse_error(source_name: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a network from the two CSV sources.
///
/// Errors name the offending line: malformed rows give [`Error::Parse`],
/// references to stops missing from `stops` give [`Error::UnknownStopRef`].
pub fn load_network(stops: impl Read, timetable: impl Read) -> Result<TransitNetwork> {
    let stop_rows = read_with_lines::<StopRecord>("stops.csv", stops, &STOPS_HEADER)?;
    for (line, s) in &stop_rows {
        if !(-90.0..=90.0).contains(&s.lat) || !(-180.0..=180.0).contains(&s.lon) {
            return Err(parse_error("stops.csv", *line, format!("coordinates out of range for {:?}", s.stop_id)));
        }
    }
    let known: HashSet<&str> = stop_rows.iter().map(|(_, s)| s.stop_id.as_str()).collect();
    let conn_rows = read_with_lines::<ConnectionRecord>("timetable.csv", timetable, &TIMETABLE_HEADER)?;
    for (line, c) in &conn_rows {
        for stop in [&c.from_stop, &c.to_stop] {
            if !known.contains(stop.as_str()) {
                return Err(Error::UnknownStopRef {
                    source_name: "timetable.csv".into(),
                    line: *line,
                    stop: stop.clone(),
                });
            }
        }
    }
    TransitNetwork::from_records(
        stop_rows.into_iter().map(|(_, s)| s).collect(),
        conn_rows.into_iter().map(|(_, c)| c).collect(),
    )
}

fn read_with_lines<T>(source_name: &str, reader: impl Read, header: &[&str]) -> Result<Vec<(u64, T)>>
where
    T: for<'de> Deserialize<'de>,
{
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let found = rdr.headers().map_err(|e| parse_error(source_name, 1, e.to_string()))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(parse_error(
            source_name,
            1,
            format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let rec: T = record
                    .deserialize(Some(&found))
                    .map_err(|e| parse_error(source_name, line, e.to_string()))?;
                out.push((line, rec));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(parse_error(source_name, line, e.to_string()));
            }
        }
    }
    Ok(out)
}

pub fn load_network_files(stops: impl AsRef<Path>, timetable: impl AsRef<Path>) -> Result<TransitNetwork> {
    load_network(File::open(stops)?, File::open(timetable)?)
}

pub fn write_stops(network: &TransitNetwork, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if network.stops().is_empty() {
        w.write_record(STOPS_HEADER)?;
    }
    for s in network.stops() {
        w.serialize(StopRecord {
            stop_id: s.id.clone(),
            name: s.name.clone(),
            lat: s.lat,
            lon: s.lon,
            mode: s.mode,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timetable(network: &TransitNetwork, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if network.connections().is_empty() {
        w.write_record(TIMETABLE_HEADER)?;
    }
    for c in network.connections() {
        w.serialize(ConnectionRecord {
            service_id: c.service_id.clone(),
            run_id: c.run_id.clone(),
            seq: c.seq,
            from_stop: network.stop_id(c.from).to_string(),
            to_stop: network.stop_id(c.to).to_string(),
            departure_min: c.departure,
            duration_min: c.duration,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `stops.csv` and `timetable.csv` into `dir`, creating it if needed.
pub fn write_network_files(network: &TransitNetwork, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_stops(network, File::create(dir.join("stops.csv"))?)?;
    write_timetable(network, File::create(dir.join("timetable.csv"))?)?;
    Ok(())
}
