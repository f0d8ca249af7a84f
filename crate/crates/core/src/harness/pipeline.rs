//! End-to-end run of the three phases for one set of requests.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use crate::best_response::{run_br_phase, JointPlan, SharedCostModel, DEFAULT_MAX_ROUNDS};
use crate::config::{KeyValues, BR_MAX_ROUNDS};
use crate::error::{Error, Result};
use crate::groups::{identify_groups, relevant_timetable, split_into_parts, Group, Part};
use crate::metrics::{cost_improvement, ExperimentResult, GroupResult};
use crate::planner::{duration_cost, plan_individual, AgentId, AgentRequest, Plan};
use crate::scheduler::{
    check_group_schedule, schedule_group, schedule_single_agent, time_limit_for, GroupSchedule, Itinerary,
    SchedulerConfig, Unscheduled,
};
use crate::transit::RelaxedGraph;
use crate::transit::TransitNetwork;

/// Tolerance for the individual-rationality re-check.
const RATIONALITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub model: SharedCostModel<f64>,
    pub max_rounds: usize,
    pub scheduler: SchedulerConfig,
    /// Plan agents and schedule groups on the rayon pool.
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: SharedCostModel::default(),
            max_rounds: DEFAULT_MAX_ROUNDS,
            scheduler: SchedulerConfig::default(),
            parallel: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_config(cfg: &KeyValues) -> Result<Self> {
        Ok(Self {
            max_rounds: cfg.get_or(BR_MAX_ROUNDS, DEFAULT_MAX_ROUNDS)?,
            scheduler: SchedulerConfig::from_config(cfg)?,
            ..Self::default()
        })
    }
}

/// Labels attached to an experiment's result rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLabel {
    pub scenario: String,
    pub direction: String,
    pub seed: u64,
}

impl Default for RunLabel {
    fn default() -> Self {
        Self {
            scenario: "adhoc".into(),
            direction: "-".into(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScheduledGroup {
    pub group: Group,
    pub parts: Vec<Part>,
    pub schedule: Result<GroupSchedule, Unscheduled>,
}

/// Everything a pipeline run produced, for callers that want more than the metrics.
#[derive(Clone, Debug)]
pub struct Execution {
    pub result: ExperimentResult,
    pub initial: Vec<Plan<f64>>,
    pub joint: JointPlan<f64>,
    pub groups: Vec<ScheduledGroup>,
    pub solo: BTreeMap<AgentId, Result<Itinerary, Unscheduled>>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn maybe_par_map<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Runs planning, best response and timetabling and evaluates the outcome.
pub fn run_pipeline(
    network: &TransitNetwork,
    graph: &RelaxedGraph,
    requests: &[AgentRequest],
    config: &PipelineConfig,
    label: &RunLabel,
) -> ExperimentResult {
    execute(network, graph, requests, config, label).result
}

/// Like [`run_pipeline`] but keeps the intermediate plans and schedules.
pub fn execute(
    network: &TransitNetwork,
    graph: &RelaxedGraph,
    requests: &[AgentRequest],
    config: &PipelineConfig,
    label: &RunLabel,
) -> Execution {
    let mut result = ExperimentResult::empty(&label.scenario, requests.len(), &label.direction, label.seed);
    let mut exec = Execution {
        result: ExperimentResult::empty(&label.scenario, requests.len(), &label.direction, label.seed),
        initial: Vec::new(),
        joint: JointPlan::default(),
        groups: Vec::new(),
        solo: BTreeMap::new(),
    };
    let start = Instant::now();
    if let Err(e) = run_phases(network, graph, requests, config, &mut result, &mut exec) {
        warn!("{} {} seed {}: {e}", label.scenario, label.direction, label.seed);
        result.error = Some(e.to_string());
    }
    result.timings.total_ms = elapsed_ms(start);
    exec.result = result;
    exec
}

fn run_phases(
    network: &TransitNetwork,
    graph: &RelaxedGraph,
    requests: &[AgentRequest],
    config: &PipelineConfig,
    result: &mut ExperimentResult,
    exec: &mut Execution,
) -> Result<()> {
    let t = Instant::now();
    let planned = maybe_par_map(requests, config.parallel, |r| plan_individual(graph, r, duration_cost::<f64>));
    for (request, plan) in requests.iter().zip(planned) {
        match plan? {
            Some(p) => {
                result.initial_costs.insert(p.agent, p.total_cost);
                exec.initial.push(p);
            }
            None => {
                debug!("agent {} cannot reach its destination", request.agent);
                result.unreachable.push(request.agent);
            }
        }
    }
    result.timings.initial_ms = elapsed_ms(t);

    let t = Instant::now();
    let outcome = run_br_phase(exec.initial.iter().cloned(), graph, &config.model, config.max_rounds)?;
    result.br_rounds = outcome.rounds;
    result.br_converged = outcome.converged;
    exec.joint = outcome.joint;
    result.timings.br_ms = elapsed_ms(t);

    if let Err(e) = exec.joint.check_consistency() {
        result.violations.push(e.to_string());
    }
    for p in &exec.initial {
        let shared = exec.joint.agent_cost(p.agent, &config.model)?;
        result.shared_costs.insert(p.agent, shared);
        if shared > p.total_cost + RATIONALITY_TOL {
            result
                .violations
                .push(format!("agent {} pays {shared} after best response, {} alone", p.agent, p.total_cost));
        }
    }
    result.delta_c = match cost_improvement(&exec.initial, &exec.joint, &config.model) {
        Ok(dc) => Some(dc),
        Err(Error::ZeroInitialCost) => None,
        Err(e) => return Err(e),
    };

    let t = Instant::now();
    let groups = identify_groups(&exec.joint)?;
    let sched = &config.scheduler;
    exec.groups = maybe_par_map(&groups, config.parallel, |g| {
        let parts = split_into_parts(g);
        let tt = relevant_timetable(g.id, &parts, network);
        let schedule = schedule_group(&parts, &tt, time_limit_for(g.size(), sched));
        if let Err(why) = &schedule {
            debug!("group {} ({} agents) unscheduled: {why}", g.id, g.size());
        }
        ScheduledGroup {
            group: g.clone(),
            parts,
            schedule,
        }
    });
    let solo_limit = time_limit_for(1, sched);
    let solo: Vec<_> = maybe_par_map(&exec.initial, config.parallel, |p| {
        (p.agent, schedule_single_agent(p, network, solo_limit))
    });
    exec.solo = solo.into_iter().collect();
    result.timings.timetabling_ms = elapsed_ms(t);

    for sg in &exec.groups {
        if let Ok(s) = &sg.schedule {
            let tt = relevant_timetable(sg.group.id, &sg.parts, network);
            if let Err(why) = check_group_schedule(s, &sg.parts, &tt) {
                result.violations.push(format!("group {}: {why}", sg.group.id));
            }
        }
        let group_durations = match &sg.schedule {
            Ok(s) => s.itineraries.iter().map(|(&a, it)| (a, it.duration())).collect(),
            Err(_) => BTreeMap::new(),
        };
        let solo_durations = sg
            .group
            .agents
            .iter()
            .map(|a| (*a, exec.solo.get(a).and_then(|s| s.as_ref().ok()).map(Itinerary::duration)))
            .collect();
        result.groups.push(
            GroupResult {
                group_id: sg.group.id,
                size: sg.group.size(),
                matched: sg.schedule.is_ok(),
                timed_out: matches!(sg.schedule, Err(Unscheduled::TimedOut)),
                group_durations,
                solo_durations,
                delta_t: None,
            }
            .with_prolongation(),
        );
    }
    Ok(())
}
