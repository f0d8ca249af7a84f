//! Request generation: quadrant-based origin/destination sampling.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{AgentId, AgentRequest};
use crate::transit::{haversine_km, LatLon};
use crate::transit::{StopIx, TransitNetwork};

/// Rejected draws tolerated before falling back to enumerating admissible pairs.
const MAX_REJECTIONS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    NS,
    SN,
    WE,
    EW,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::NS, Direction::SN, Direction::WE, Direction::EW];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::NS => "NS",
            Direction::SN => "SN",
            Direction::WE => "WE",
            Direction::EW => "EW",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Scenario(format!("unknown direction {s:?}")))
    }
}

/// Quadrants around the axes: I is north-east, then counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quadrant {
    I,
    II,
    III,
    IV,
}

/// Axes through the median latitude and longitude of all stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axes {
    pub lat: f64,
    pub lon: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl Axes {
    pub fn at_medians(network: &TransitNetwork) -> Result<Self> {
        if network.stop_count() == 0 {
            return Err(Error::Scenario("network has no stops".into()));
        }
        Ok(Self {
            lat: median(network.stops().iter().map(|s| s.lat).collect()),
            lon: median(network.stops().iter().map(|s| s.lon).collect()),
        })
    }

    /// Stops lying on an axis belong to no quadrant.
    pub fn quadrant(&self, p: LatLon) -> Option<Quadrant> {
        let north = p.lat > self.lat;
        let south = p.lat < self.lat;
        let east = p.lon > self.lon;
        let west = p.lon < self.lon;
        match (north, south, east, west) {
            (true, _, true, _) => Some(Quadrant::I),
            (true, _, _, true) => Some(Quadrant::II),
            (_, true, _, true) => Some(Quadrant::III),
            (_, true, true, _) => Some(Quadrant::IV),
            _ => None,
        }
    }
}

impl Direction {
    /// Origin/destination quadrant pairings. North-south is I→IV and II→III;
    /// the others follow by rotation.
    pub fn pairings(self) -> [(Quadrant, Quadrant); 2] {
        use Quadrant::*;
        match self {
            Direction::NS => [(I, IV), (II, III)],
            Direction::SN => [(IV, I), (III, II)],
            Direction::WE => [(II, I), (III, IV)],
            Direction::EW => [(I, II), (IV, III)],
        }
    }
}

/// Straight-line distance window for origin/destination pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceWindow {
    pub min_km: f64,
    pub max_km: f64,
}

impl Default for DistanceWindow {
    fn default() -> Self {
        Self {
            min_km: 20.0,
            max_km: 160.0,
        }
    }
}

impl DistanceWindow {
    pub fn new(min_km: f64, max_km: f64) -> Result<Self> {
        if !(min_km >= 0.0 && min_km < max_km) {
            return Err(Error::Scenario(format!("distance window [{min_km}, {max_km}] is empty")));
        }
        Ok(Self { min_km, max_km })
    }

    pub fn contains(&self, km: f64) -> bool {
        (self.min_km..=self.max_km).contains(&km)
    }
}

/// Samples `n_agents` requests uniformly, with replacement, from the
/// admissible origin/destination pairs for `direction`.
pub fn generate_requests<R: Rng>(
    network: &TransitNetwork,
    n_agents: usize,
    direction: Direction,
    window: DistanceWindow,
    rng: &mut R,
) -> Result<Vec<AgentRequest>> {
    let axes = Axes::at_medians(network)?;
    let pos: Vec<LatLon> = network.stops().iter().map(|s| s.position()).collect();
    let members = |q: Quadrant| -> Vec<StopIx> {
        (0..pos.len())
            .filter(|&i| axes.quadrant(pos[i]) == Some(q))
            .map(|i| StopIx(i as u32))
            .collect()
    };
    let blocks: Vec<(Vec<StopIx>, Vec<StopIx>)> = direction
        .pairings()
        .into_iter()
        .map(|(a, b)| (members(a), members(b)))
        .collect();
    let sizes: Vec<usize> = blocks.iter().map(|(a, b)| a.len() * b.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::Scenario(format!("no origin/destination pairs for direction {direction}")));
    }
    let admissible = |o: StopIx, d: StopIx| window.contains(haversine_km(pos[o.index()], pos[d.index()]));

    let mut requests = Vec::with_capacity(n_agents);
    let mut enumerated: Option<Vec<(StopIx, StopIx)>> = None;
    for agent in 0..n_agents {
        let agent = AgentId(agent as u32);
        if enumerated.is_none() {
            let mut found = None;
            for _ in 0..MAX_REJECTIONS {
                let mut k = rng.gen_range(0..total);
                let block = sizes.iter().position(|&s| {
                    let here = k < s;
                    if !here {
                        k -= s;
                    }
                    here
                });
                let (from, to) = &blocks[block.expect("k < total")];
                let (o, d) = (from[k / to.len()], to[k % to.len()]);
                if admissible(o, d) {
                    found = Some((o, d));
                    break;
                }
            }
            if let Some((o, d)) = found {
                requests.push(AgentRequest::new(agent, o, d));
                continue;
            }
            let all: Vec<(StopIx, StopIx)> = blocks
                .iter()
                .flat_map(|(from, to)| from.iter().flat_map(move |&o| to.iter().map(move |&d| (o, d))))
                .filter(|&(o, d)| admissible(o, d))
                .collect();
            if all.is_empty() {
                return Err(Error::Scenario(format!(
                    "no {direction} pairs between {} and {} km",
                    window.min_km, window.max_km
                )));
            }
            enumerated = Some(all);
        }
        let all = enumerated.as_ref().expect("set above");
        let (o, d) = all[rng.gen_range(0..all.len())];
        requests.push(AgentRequest::new(agent, o, d));
    }
    Ok(requests)
}

#[derive(Deserialize)]
struct RequestRow {
    agent: u32,
    origin: String,
    destination: String,
}

/// Reads `agent,origin,destination` rows, resolving stop ids against `network`.
pub fn read_requests(input: impl Read, network: &TransitNetwork) -> Result<Vec<AgentRequest>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(["agent", "origin", "destination"]) {
        return Err(Error::Parse {
            source_name: "requests.csv".into(),
            line: 1,
            message: "expected header agent,origin,destination".into(),
        });
    }
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in rdr.deserialize::<RequestRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Parse {
            source_name: "requests.csv".into(),
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(row.agent) {
            return Err(Error::Parse {
                source_name: "requests.csv".into(),
                line,
                message: format!("agent {} listed twice", row.agent),
            });
        }
        let resolve = |id: &str| {
            network.stop_ix(id).ok_or_else(|| Error::UnknownStopRef {
                source_name: "requests.csv".into(),
                line,
                stop: id.to_string(),
            })
        };
        out.push(AgentRequest::new(AgentId(row.agent), resolve(&row.origin)?, resolve(&row.destination)?));
    }
    Ok(out)
}
