//! Grid-shaped synthetic networks for desk-scale experiments.

use crate::error::{Error, Result};
use crate::transit::{ConnectionRecord, StopRecord};
use crate::transit::{LatLon, EARTH_RADIUS_KM};
use crate::transit::{Minutes, Mode, TransitNetwork, DAY_MINUTES};

/// A `width × height` grid of stops served by one line per row and per
/// column, each run in both directions at a fixed headway.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticNetworkSpec {
    pub width: u32,
    pub height: u32,
    pub spacing_km: f64,
    pub headway: Minutes,
    pub leg_minutes: Minutes,
    pub first_departure: Minutes,
    pub last_departure: Minutes,
    /// Line `k` (rows then columns) starts `k * offset_step mod headway` minutes late.
    pub offset_step: Minutes,
    /// Every `limited_every`-th line (0 for none) stops running at `limited_last_departure`.
    pub limited_every: u32,
    pub limited_last_departure: Minutes,
    pub mode: Mode,
    /// South-west corner.
    pub origin: LatLon,
}

impl Default for SyntheticNetworkSpec {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            spacing_km: 5.0,
            headway: 30,
            leg_minutes: 10,
            first_departure: 360,
            last_departure: 1320,
            offset_step: 0,
            limited_every: 0,
            limited_last_departure: 600,
            mode: Mode::Rail,
            origin: LatLon::new(55.0, -4.0),
        }
    }
}

impl SyntheticNetworkSpec {
    pub fn grid(width: u32, height: u32, headway: Minutes, leg_minutes: Minutes) -> Self {
        Self {
            width,
            height,
            headway,
            leg_minutes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(format!("synthetic network: {m}")));
        if self.width == 0 || self.height == 0 || self.width * self.height < 2 {
            return bad("grid needs at least two stops");
        }
        if self.spacing_km.is_nan() || self.spacing_km <= 0.0 || self.headway == 0 || self.leg_minutes == 0 {
            return bad("spacing, headway and leg duration must be positive");
        }
        if self.first_departure > self.last_departure || self.last_departure >= DAY_MINUTES {
            return bad("service window must lie within the day");
        }
        if self.limited_every > 0 && self.limited_last_departure < self.first_departure {
            return bad("limited lines must run at least once");
        }
        Ok(())
    }

    pub fn stop_id(x: u32, y: u32) -> String {
        format!("G{x:03}_{y:03}")
    }

    fn position(&self, x: u32, y: u32) -> LatLon {
        let km_per_deg = EARTH_RADIUS_KM.to_radians();
        let lat = self.origin.lat + f64::from(y) * self.spacing_km / km_per_deg;
        let lon = self.origin.lon + f64::from(x) * self.spacing_km / (km_per_deg * self.origin.lat.to_radians().cos());
        LatLon::new(lat, lon)
    }

    fn is_limited(&self, line: usize) -> bool {
        self.limited_every > 0 && line.is_multiple_of(self.limited_every as usize)
    }

    /// Departure minutes of runs along line number `line` of `stops` stops.
    /// Rows are numbered first, then columns.
    pub fn departures(&self, line: usize, stops: u32) -> Vec<Minutes> {
        if stops < 2 {
            return Vec::new();
        }
        let span = (stops - 2) * self.leg_minutes;
        let closing = if self.is_limited(line) {
            self.limited_last_departure.min(self.last_departure)
        } else {
            self.last_departure
        };
        let last = closing.min((DAY_MINUTES - 1).saturating_sub(span));
        (self.first_departure..=last).step_by(self.headway as usize).collect()
    }

    /// Total number of runs the generator emits when no offset pushes a run past midnight.
    pub fn run_count(&self) -> usize {
        let rows = (0..self.height as usize).map(|k| self.departures(k, self.width).len());
        let cols = (0..self.width as usize).map(|k| self.departures(self.height as usize + k, self.height).len());
        2 * rows.chain(cols).sum::<usize>()
    }
}

/// Builds the grid network described by `spec`.
pub fn generate_synthetic_network(spec: &SyntheticNetworkSpec) -> Result<TransitNetwork> {
    spec.validate()?;
    let mut stops = Vec::with_capacity((spec.width * spec.height) as usize);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let p = spec.position(x, y);
            stops.push(StopRecord {
                stop_id: SyntheticNetworkSpec::stop_id(x, y),
                name: format!("Grid {x},{y}"),
                lat: p.lat,
                lon: p.lon,
                mode: spec.mode,
            });
        }
    }

    let mut lines: Vec<(String, Vec<(u32, u32)>)> = Vec::new();
    for y in 0..spec.height {
        lines.push((format!("ROW{y:03}"), (0..spec.width).map(|x| (x, y)).collect()));
    }
    for x in 0..spec.width {
        lines.push((format!("COL{x:03}"), (0..spec.height).map(|y| (x, y)).collect()));
    }

    let mut connections = Vec::new();
    for (k, (name, cells)) in lines.iter().enumerate() {
        let offset = (k as Minutes * spec.offset_step) % spec.headway;
        for (dir, forward) in [("F", true), ("B", false)] {
            let ordered: Vec<(u32, u32)> = if forward {
                cells.clone()
            } else {
                cells.iter().rev().copied().collect()
            };
            for (r, dep) in spec.departures(k, cells.len() as u32).into_iter().enumerate() {
                let start = dep + offset;
                let last_leg_departure = start + (cells.len() as Minutes - 2) * spec.leg_minutes;
                // Offsets must not push a run past midnight; drop it instead.
                if last_leg_departure >= DAY_MINUTES {
                    continue;
                }
                let service_id = format!("{name}{dir}");
                let run_id = format!("{name}{dir}-{r:03}");
                for (seq, hop) in ordered.windows(2).enumerate() {
                    connections.push(ConnectionRecord {
                        service_id: service_id.clone(),
                        run_id: run_id.clone(),
                        seq: seq as u32 + 1,
                        from_stop: SyntheticNetworkSpec::stop_id(hop[0].0, hop[0].1),
                        to_stop: SyntheticNetworkSpec::stop_id(hop[1].0, hop[1].1),
                        departure_min: start + seq as Minutes * spec.leg_minutes,
                        duration_min: spec.leg_minutes,
                    });
                }
            }
        }
    }
    TransitNetwork::from_records(stops, connections)
}
