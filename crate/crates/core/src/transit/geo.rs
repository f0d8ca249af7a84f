use super::{Minutes, StopIx, TransitNetwork};
use crate::config::{KeyValues, WALK_MAX_KM, WALK_SPEED_KMH};
use crate::error::Result;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkingParams {
    pub max_km: f64,
    pub speed_kmh: f64,
}

impl Default for WalkingParams {
    fn default() -> Self {
        Self {
            max_km: 0.5,
            speed_kmh: 5.0,
        }
    }
}

impl WalkingParams {
    pub fn from_config(cfg: &KeyValues) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            max_km: cfg.get_or(WALK_MAX_KM, d.max_km)?,
            speed_kmh: cfg.get_or(WALK_SPEED_KMH, d.speed_kmh)?,
        })
    }

    /// Whole minutes needed to walk `km`, never less than one.
    pub fn walk_minutes(&self, km: f64) -> Minutes {
        ((60.0 * km / self.speed_kmh).ceil() as Minutes).max(1)
    }
}

/// Adds symmetric walking links between every pair of stops within `max_km`.
///
/// Re-applying with the same parameters leaves the link set unchanged.
pub fn add_walking_links(mut network: TransitNetwork, params: WalkingParams) -> TransitNetwork {
    assert!(params.max_km > 0.0 && params.speed_kmh > 0.0, "walking parameters must be positive");
    let positions: Vec<LatLon> = network.stops().iter().map(|s| s.position()).collect();
    // Cheap latitude prefilter: one degree of latitude is ~111.19 km.
    let lat_window = params.max_km / (EARTH_RADIUS_KM.to_radians()) + 1e-9;
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].lat.total_cmp(&positions[b].lat));
    let mut links = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if positions[j].lat - positions[i].lat > lat_window {
                break;
            }
            let d = haversine_km(positions[i], positions[j]);
            if d <= params.max_km {
                links.push((StopIx(i as u32), StopIx(j as u32), params.walk_minutes(d)));
            }
        }
    }
    for (a, b, minutes) in links {
        network.insert_walking_link(a, b, minutes);
    }
    network
}
