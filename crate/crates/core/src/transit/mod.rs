//! Transit data model: stops, timetabled connections, walking links and the
//! relaxed stop graph derived from them.

mod csv_io;
mod geo;
mod relaxed;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_network, load_network_files, write_network_files, write_stops, write_timetable,
    ConnectionRecord, StopRecord, STOPS_HEADER, TIMETABLE_HEADER,
};
pub use geo::{add_walking_links, haversine_km, LatLon, WalkingParams, EARTH_RADIUS_KM};
pub use relaxed::{build_relaxed_graph, EdgeBacking, RelaxedEdge, RelaxedGraph};

/// Minutes since service-day midnight.
pub type Minutes = u32;

/// Length of the single service day every journey must fit into.
pub const DAY_MINUTES: Minutes = 1440;

/// Dense index of a stop within one [`TransitNetwork`].
///
/// Stops are stored sorted by id, so comparing indices compares ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StopIx(pub u32);

impl StopIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StopIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Rail,
    Coach,
    WalkNode,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rail => "rail",
            Mode::Coach => "coach",
            Mode::WalkNode => "walk-node",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rail" => Ok(Mode::Rail),
            "coach" => Ok(Mode::Coach),
            "walk-node" => Ok(Mode::WalkNode),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stop {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub mode: Mode,
}

impl Stop {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// One leg of one vehicle journey (run) between two consecutive stops of the run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimetabledConnection {
    pub service_id: String,
    pub run_id: String,
    pub seq: u32,
    pub from: StopIx,
    pub to: StopIx,
    pub departure: Minutes,
    pub duration: Minutes,
}

impl TimetabledConnection {
    pub fn arrival(&self) -> Minutes {
        self.departure + self.duration
    }

    /// Key used to break ties between otherwise equal connections.
    pub fn tie_key(&self) -> (&str, &str, u32) {
        (&self.service_id, &self.run_id, self.seq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkingLink {
    pub from: StopIx,
    pub to: StopIx,
    pub duration: Minutes,
}

/// Stops, timetable and walking links of one service day.
///
/// Immutable once built; share it by reference between threads.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitNetwork {
    stops: Vec<Stop>,
    index: HashMap<String, StopIx>,
    /// Sorted by `(run_id, seq)`.
    connections: Vec<TimetabledConnection>,
    walking: BTreeMap<(StopIx, StopIx), Minutes>,
    departures_from: Vec<Vec<u32>>,
}

impl TransitNetwork {
    /// Builds a validated network from stop and connection records.
    ///
    /// Rows sharing `(run_id, seq)` are collapsed with the later row winning.
    pub fn from_records(stops: Vec<StopRecord>, connections: Vec<ConnectionRecord>) -> Result<Self> {
        let mut stops: Vec<Stop> = stops
            .into_iter()
            .map(|r| Stop {
                id: r.stop_id,
                name: r.name,
                lat: r.lat,
                lon: r.lon,
                mode: r.mode,
            })
            .collect();
        stops.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in stops.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidNetwork(format!("duplicate stop id {:?}", pair[0].id)));
            }
        }
        for s in &stops {
            if !(-90.0..=90.0).contains(&s.lat) || !(-180.0..=180.0).contains(&s.lon) {
                return Err(Error::InvalidNetwork(format!(
                    "stop {:?} has out-of-range coordinates ({}, {})",
                    s.id, s.lat, s.lon
                )));
            }
        }
        let index: HashMap<String, StopIx> = stops
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), StopIx(i as u32)))
            .collect();

        let mut dedup: BTreeMap<(String, u32), TimetabledConnection> = BTreeMap::new();
        for rec in connections {
            let resolve = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownStop(id.to_string()));
            let conn = TimetabledConnection {
                from: resolve(&rec.from_stop)?,
                to: resolve(&rec.to_stop)?,
                service_id: rec.service_id,
                run_id: rec.run_id,
                seq: rec.seq,
                departure: rec.departure_min,
                duration: rec.duration_min,
            };
            dedup.insert((conn.run_id.clone(), conn.seq), conn);
        }
        let connections: Vec<_> = dedup.into_values().collect();
        Self::validate_runs(&stops, &connections)?;

        let mut departures_from = vec![Vec::new(); stops.len()];
        for (i, c) in connections.iter().enumerate() {
            departures_from[c.from.index()].push(i as u32);
        }
        Ok(Self {
            stops,
            index,
            connections,
            walking: BTreeMap::new(),
            departures_from,
        })
    }

    fn validate_runs(stops: &[Stop], connections: &[TimetabledConnection]) -> Result<()> {
        let name = |ix: StopIx| stops[ix.index()].id.as_str();
        for run in connections.chunk_by(|a, b| a.run_id == b.run_id) {
            for (k, c) in run.iter().enumerate() {
                let ctx = || format!("run {:?} seq {}", c.run_id, c.seq);
                if c.seq != k as u32 + 1 {
                    return Err(Error::InvalidNetwork(format!(
                        "{}: sequence numbers must be consecutive from 1",
                        ctx()
                    )));
                }
                if c.from == c.to {
                    return Err(Error::InvalidNetwork(format!("{}: departs and arrives at {}", ctx(), name(c.from))));
                }
                if c.duration == 0 {
                    return Err(Error::InvalidNetwork(format!("{}: zero duration", ctx())));
                }
                if c.departure >= DAY_MINUTES {
                    return Err(Error::InvalidNetwork(format!("{}: departure {} outside the day", ctx(), c.departure)));
                }
                if k > 0 {
                    let prev = &run[k - 1];
                    if prev.to != c.from {
                        return Err(Error::InvalidNetwork(format!(
                            "{}: starts at {} but previous leg ends at {}",
                            ctx(),
                            name(c.from),
                            name(prev.to)
                        )));
                    }
                    if c.departure < prev.arrival() {
                        return Err(Error::InvalidNetwork(format!(
                            "{}: departs before the previous leg arrives",
                            ctx()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn stop(&self, ix: StopIx) -> &Stop {
        &self.stops[ix.index()]
    }

    pub fn stop_count(&self) -> usize {
        self.stops.len()
    }

    pub fn stop_ix(&self, id: &str) -> Option<StopIx> {
        self.index.get(id).copied()
    }

    pub fn resolve(&self, id: &str) -> Result<StopIx> {
        self.stop_ix(id).ok_or_else(|| Error::UnknownStop(id.to_string()))
    }

    pub fn stop_id(&self, ix: StopIx) -> &str {
        &self.stops[ix.index()].id
    }

    pub fn connections(&self) -> &[TimetabledConnection] {
        &self.connections
    }

    /// Connections leaving `stop`, in `(run_id, seq)` order.
    pub fn departures_from(&self, stop: StopIx) -> impl Iterator<Item = &TimetabledConnection> + '_ {
        self.departures_from[stop.index()]
            .iter()
            .map(move |&i| &self.connections[i as usize])
    }

    /// Runs as slices of their connections in `seq` order.
    pub fn runs(&self) -> impl Iterator<Item = &[TimetabledConnection]> + '_ {
        self.connections.chunk_by(|a, b| a.run_id == b.run_id)
    }

    pub fn walking_links(&self) -> impl Iterator<Item = WalkingLink> + '_ {
        self.walking.iter().map(|(&(from, to), &duration)| WalkingLink { from, to, duration })
    }

    pub fn walking_duration(&self, from: StopIx, to: StopIx) -> Option<Minutes> {
        self.walking.get(&(from, to)).copied()
    }

    /// Inserts a walking link in both directions.
    pub fn insert_walking_link(&mut self, a: StopIx, b: StopIx, duration: Minutes) {
        assert!(a != b, "walking link must join two different stops");
        assert!(duration > 0, "walking link duration must be positive");
        self.walking.insert((a, b), duration);
        self.walking.insert((b, a), duration);
    }
}
