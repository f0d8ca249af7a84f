//! Scenario generation, batch runs and the synthetic network family.
//!
//! A batch is described by a `key=value` matrix file:
//!
//! ```text
//! scenarios = S1,S2
//! scenario.S1.grid = 10x10
//! scenario.S1.spacing_km = 5
//! scenario.S2.stops = data/stops.csv
//! scenario.S2.timetable = data/timetable.csv
//! agents = 2,4,6
//! seeds = 10
//! ```
//!
//! Every (scenario, agent count) cell runs `seeds` experiments per direction.

pub mod pipeline;
pub mod requests;
pub mod synth;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{KeyValues, HARNESS_MAX_KM, HARNESS_MIN_KM};
use crate::error::{Error, Result};
use crate::metrics::ExperimentResult;
use crate::transit::load_network_files;
use crate::transit::{add_walking_links, WalkingParams};
use crate::transit::{build_relaxed_graph, RelaxedGraph};
use crate::transit::{Mode, TransitNetwork};

pub use pipeline::{execute, run_pipeline, Execution, PipelineConfig, RunLabel, ScheduledGroup};
pub use requests::{generate_requests, read_requests, Axes, Direction, DistanceWindow, Quadrant};
pub use synth::{generate_synthetic_network, SyntheticNetworkSpec};

pub const DEFAULT_AGENT_COUNTS: [usize; 7] = [2, 4, 6, 8, 10, 12, 14];
pub const DEFAULT_SEEDS_PER_DIRECTION: u64 = 10;

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSource {
    Synthetic(SyntheticNetworkSpec),
    Files { stops: PathBuf, timetable: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub source: NetworkSource,
}

impl ScenarioSpec {
    pub fn load(&self, walking: WalkingParams) -> Result<TransitNetwork> {
        let network = match &self.source {
            NetworkSource::Synthetic(spec) => generate_synthetic_network(spec)?,
            NetworkSource::Files { stops, timetable } => load_network_files(stops, timetable)?,
        };
        Ok(add_walking_links(network, walking))
    }
}

/// Grids of growing size, 100 to 2000 stops, standing in for regional networks.
///
/// Hourly service from 06:00; every other line runs only until 08:00, so
/// groups that gather late can miss their connections.
pub fn default_family() -> Vec<ScenarioSpec> {
    [("S1", 10, 10), ("S2", 20, 15), ("S3", 25, 20), ("S4", 40, 25), ("S5", 50, 40)]
        .into_iter()
        .map(|(name, w, h)| ScenarioSpec {
            name: name.to_string(),
            source: NetworkSource::Synthetic(family_grid(w, h)),
        })
        .collect()
}

fn family_grid(width: u32, height: u32) -> SyntheticNetworkSpec {
    SyntheticNetworkSpec {
        spacing_km: 4.0,
        headway: 60,
        leg_minutes: 6,
        first_departure: 360,
        last_departure: 1200,
        offset_step: 17,
        limited_every: 2,
        limited_last_departure: 480,
        ..SyntheticNetworkSpec::grid(width, height, 60, 6)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchConfig {
    pub scenarios: Vec<ScenarioSpec>,
    pub agent_counts: Vec<usize>,
    pub directions: Vec<Direction>,
    pub seeds_per_direction: u64,
    pub seed_base: u64,
    pub window: DistanceWindow,
    pub walking: WalkingParams,
    pub pipeline: PipelineConfig,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            scenarios: default_family(),
            agent_counts: DEFAULT_AGENT_COUNTS.to_vec(),
            directions: Direction::ALL.to_vec(),
            seeds_per_direction: DEFAULT_SEEDS_PER_DIRECTION,
            seed_base: 1,
            window: DistanceWindow::default(),
            walking: WalkingParams::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_grid(key: &str, raw: &str) -> Result<(u32, u32)> {
    let (w, h) = raw
        .split_once(['x', 'X'])
        .ok_or_else(|| config_error(key, format!("expected WxH, got {raw:?}")))?;
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| config_error(key, format!("bad grid size {raw:?}")));
    Ok((parse(w)?, parse(h)?))
}

pub fn parse_grid_size(raw: &str) -> Result<(u32, u32)> {
    parse_grid("grid", raw)
}

impl BatchConfig {
    /// Reads a matrix; relative file paths resolve against `base_dir`.
    pub fn from_matrix(kv: &KeyValues, base_dir: &Path) -> Result<Self> {
        let mut scenarios = Vec::new();
        for name in kv.get_list("scenarios").unwrap_or_default() {
            let key = |field: &str| format!("scenario.{name}.{field}");
            let source = if let Some(stops) = kv.get(&key("stops")) {
                let timetable = kv
                    .get(&key("timetable"))
                    .ok_or_else(|| config_error(&key("timetable"), "missing"))?;
                NetworkSource::Files {
                    stops: base_dir.join(stops),
                    timetable: base_dir.join(timetable),
                }
            } else {
                let grid_key = key("grid");
                let grid = kv.get(&grid_key).ok_or_else(|| config_error(&grid_key, "scenario needs a grid or network files"))?;
                let (width, height) = parse_grid(&grid_key, grid)?;
                let d = family_grid(width, height);
                let spec = SyntheticNetworkSpec {
                    spacing_km: kv.get_or(&key("spacing_km"), d.spacing_km)?,
                    headway: kv.get_or(&key("headway"), d.headway)?,
                    leg_minutes: kv.get_or(&key("leg"), d.leg_minutes)?,
                    first_departure: kv.get_or(&key("first_departure"), d.first_departure)?,
                    last_departure: kv.get_or(&key("last_departure"), d.last_departure)?,
                    offset_step: kv.get_or(&key("offset_step"), d.offset_step)?,
                    limited_every: kv.get_or(&key("limited_every"), d.limited_every)?,
                    limited_last_departure: kv.get_or(&key("limited_last_departure"), d.limited_last_departure)?,
                    mode: kv.get_or(&key("mode"), Mode::Rail)?,
                    ..d
                };
                spec.validate()?;
                NetworkSource::Synthetic(spec)
            };
            scenarios.push(ScenarioSpec {
                name: name.to_string(),
                source,
            });
        }
        let agent_counts = match kv.get_list("agents") {
            None => DEFAULT_AGENT_COUNTS.to_vec(),
            Some(list) => list
                .iter()
                .map(|s| match s.parse::<usize>() {
                    Ok(n) if n > 0 => Ok(n),
                    _ => Err(config_error("agents", format!("bad agent count {s:?}"))),
                })
                .collect::<Result<_>>()?,
        };
        let directions = match kv.get_list("directions") {
            None => Direction::ALL.to_vec(),
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        };
        let window = DistanceWindow::new(kv.get_or(HARNESS_MIN_KM, 20.0)?, kv.get_or(HARNESS_MAX_KM, 160.0)?)?;
        Ok(Self {
            scenarios,
            agent_counts,
            directions,
            seeds_per_direction: kv.get_or("seeds", DEFAULT_SEEDS_PER_DIRECTION)?,
            seed_base: kv.get_or("seed.base", 1)?,
            window,
            walking: WalkingParams::from_config(kv)?,
            pipeline: PipelineConfig::from_config(kv)?,
        })
    }

    pub fn load_matrix(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KeyValues::load(path)?;
        Self::from_matrix(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn experiment_count(&self) -> usize {
        self.scenarios.len() * self.agent_counts.len() * self.directions.len() * self.seeds_per_direction as usize
    }
}

/// RNG seed of one experiment, mixing the run's coordinates.
pub fn experiment_seed(seed: u64, n_agents: usize, direction: Direction) -> u64 {
    let dir = Direction::ALL.iter().position(|&d| d == direction).expect("listed") as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((n_agents as u64) << 8) ^ dir
}

struct Prepared {
    name: String,
    network: TransitNetwork,
    graph: RelaxedGraph,
}

/// Runs every experiment of the matrix and returns results in a fixed order:
/// scenario, agent count, direction, seed.
///
/// `threads` runs experiments on a rayon pool of that size; output is
/// identical either way.
pub fn run_batch(config: &BatchConfig, threads: Option<usize>) -> Result<Vec<ExperimentResult>> {
    let mut prepared = Vec::new();
    for s in &config.scenarios {
        let t = Instant::now();
        let network = s.load(config.walking)?;
        let graph = build_relaxed_graph(&network);
        info!(
            "scenario {}: {} stops, {} connections, {} relaxed edges ({:.0} ms)",
            s.name,
            network.stop_count(),
            network.connections().len(),
            graph.edge_count(),
            t.elapsed().as_secs_f64() * 1e3
        );
        prepared.push(Prepared {
            name: s.name.clone(),
            network,
            graph,
        });
    }

    let mut jobs = Vec::with_capacity(config.experiment_count());
    for (si, _) in prepared.iter().enumerate() {
        for &n in &config.agent_counts {
            for &d in &config.directions {
                for k in 0..config.seeds_per_direction {
                    jobs.push((si, n, d, config.seed_base + k));
                }
            }
        }
    }

    let pipeline = PipelineConfig {
        parallel: threads.is_some(),
        ..config.pipeline.clone()
    };
    let run_one = |&(si, n, d, seed): &(usize, usize, Direction, u64)| {
        let p: &Prepared = &prepared[si];
        let label = RunLabel {
            scenario: p.name.clone(),
            direction: d.to_string(),
            seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(experiment_seed(seed, n, d));
        match generate_requests(&p.network, n, d, config.window, &mut rng) {
            Ok(reqs) => run_pipeline(&p.network, &p.graph, &reqs, &pipeline, &label),
            Err(e) => {
                log::warn!("{} {n} agents {d} seed {seed}: {e}", p.name);
                let mut r = ExperimentResult::empty(&p.name, n, d.as_str(), seed);
                r.error = Some(e.to_string());
                r
            }
        }
    };

    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Scenario(format!("cannot start worker pool: {e}")))?
            .install(|| jobs.par_iter().map(run_one).collect()),
        None => jobs.iter().map(run_one).collect(),
    };
    Ok(results)
}
