//! Joint plans and best-response dynamics under the group-discount cost.
//!
//! An agent sharing an edge with `n - 1` others pays
//! `(discount_share / n + floor_share)` of the solo cost. The game is a
//! congestion game with a Rosenthal potential, so round-robin best responses
//! terminate in a Nash equilibrium.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{plan_individual, AgentId, AgentRequest, Leg, Plan, PlanRecord};
use crate::scalar::Scalar;
use crate::transit::{Minutes, RelaxedGraph, StopIx, TransitNetwork};

/// Improvements smaller than this count as no change.
pub const CONVERGENCE_EPS: f64 = 1e-9;

pub const DEFAULT_MAX_ROUNDS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharedCostModel<S> {
    discount_share: S,
    floor_share: S,
}

impl<S: Scalar> Default for SharedCostModel<S> {
    fn default() -> Self {
        Self {
            discount_share: S::ratio(4, 5),
            floor_share: S::ratio(1, 5),
        }
    }
}

impl<S: Scalar> SharedCostModel<S> {
    /// Both shares must lie in (0, 1) and sum to one.
    pub fn new(discount_share: S, floor_share: S) -> Result<Self> {
        let in_unit = |x: S| x > S::zero() && x < S::one();
        if !in_unit(discount_share) || !in_unit(floor_share) {
            return Err(Error::InvalidCostModel("shares must lie strictly between 0 and 1".into()));
        }
        let sum = (discount_share + floor_share).to_f64_lossy();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCostModel(format!("shares sum to {sum}, not 1")));
        }
        Ok(Self {
            discount_share,
            floor_share,
        })
    }

    pub fn discount_share(&self) -> S {
        self.discount_share
    }

    pub fn floor_share(&self) -> S {
        self.floor_share
    }

    /// Cost to one of `n` agents travelling together on a leg whose solo cost is `c_single`.
    pub fn shared_cost(&self, c_single: S, n: u32) -> Result<S> {
        if n == 0 {
            return Err(Error::EmptyGroup);
        }
        Ok(self.factor(n) * c_single)
    }

    fn factor(&self, n: u32) -> S {
        self.discount_share / S::from_u32(n).expect("group size representable") + self.floor_share
    }
}

/// Label of one joint-plan edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeLabel {
    pub minutes: Minutes,
    pub agents: BTreeSet<AgentId>,
}

/// Union of the agents' plans with every edge labelled by the agents using it.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPlan<S> {
    edges: BTreeMap<(StopIx, StopIx), EdgeLabel>,
    per_agent: BTreeMap<AgentId, Plan<S>>,
}

impl<S: Scalar> Default for JointPlan<S> {
    fn default() -> Self {
        Self {
            edges: BTreeMap::new(),
            per_agent: BTreeMap::new(),
        }
    }
}

/// Graph union of the plans. A later plan for an already present agent replaces the earlier one.
pub fn merge_plans<S: Scalar>(plans: impl IntoIterator<Item = Plan<S>>) -> JointPlan<S> {
    let mut joint = JointPlan::default();
    for plan in plans {
        joint.replace_plan(plan);
    }
    joint
}

impl<S: Scalar> JointPlan<S> {
    pub fn edges(&self) -> &BTreeMap<(StopIx, StopIx), EdgeLabel> {
        &self.edges
    }

    pub fn label(&self, from: StopIx, to: StopIx) -> Option<&BTreeSet<AgentId>> {
        self.edges.get(&(from, to)).map(|l| &l.agents)
    }

    pub fn plans(&self) -> &BTreeMap<AgentId, Plan<S>> {
        &self.per_agent
    }

    pub fn plan(&self, agent: AgentId) -> Option<&Plan<S>> {
        self.per_agent.get(&agent)
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.per_agent.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.per_agent.is_empty()
    }

    /// Number of agents other than `agent` on the edge.
    pub fn others_on(&self, from: StopIx, to: StopIx, agent: AgentId) -> u32 {
        self.edges.get(&(from, to)).map_or(0, |l| {
            l.agents.len() as u32 - u32::from(l.agents.contains(&agent))
        })
    }

    pub fn remove_agent(&mut self, agent: AgentId) -> Option<Plan<S>> {
        let old = self.per_agent.remove(&agent)?;
        for leg in &old.legs {
            if let Some(label) = self.edges.get_mut(&leg.key()) {
                label.agents.remove(&agent);
                if label.agents.is_empty() {
                    self.edges.remove(&leg.key());
                }
            }
        }
        Some(old)
    }

    pub fn replace_plan(&mut self, plan: Plan<S>) {
        self.remove_agent(plan.agent);
        for leg in &plan.legs {
            self.edges
                .entry(leg.key())
                .or_insert_with(|| EdgeLabel {
                    minutes: leg.minutes,
                    agents: BTreeSet::new(),
                })
                .agents
                .insert(plan.agent);
        }
        self.per_agent.insert(plan.agent, plan);
    }

    /// Checks that labels and per-agent plans describe the same edge membership.
    pub fn check_consistency(&self) -> Result<()> {
        let mut expected: BTreeMap<(StopIx, StopIx), BTreeSet<AgentId>> = BTreeMap::new();
        for (agent, plan) in &self.per_agent {
            if plan.agent != *agent {
                return Err(Error::Inconsistent(format!("plan stored under {agent} belongs to {}", plan.agent)));
            }
            if !plan.is_chained() || !plan.is_simple() {
                return Err(Error::Inconsistent(format!("plan of agent {agent} is not a simple chained path")));
            }
            for leg in &plan.legs {
                expected.entry(leg.key()).or_default().insert(*agent);
            }
        }
        let actual: BTreeMap<_, _> = self.edges.iter().map(|(k, l)| (*k, l.agents.clone())).collect();
        if expected != actual {
            return Err(Error::Inconsistent("edge labels disagree with agent plans".into()));
        }
        Ok(())
    }

    /// Cost of `agent`'s plan with each leg discounted by its label size.
    pub fn agent_cost(&self, agent: AgentId, model: &SharedCostModel<S>) -> Result<S> {
        let plan = self.per_agent.get(&agent).ok_or(Error::UnknownAgent(agent.0))?;
        plan.legs.iter().try_fold(S::zero(), |acc, leg| {
            let n = self.edges[&leg.key()].agents.len() as u32;
            Ok(acc + model.shared_cost(S::from_minutes(leg.minutes), n)?)
        })
    }

    /// Sum of all agents' shared costs.
    pub fn total_cost(&self, model: &SharedCostModel<S>) -> S {
        self.per_agent
            .keys()
            .map(|&a| self.agent_cost(a, model).expect("agent present"))
            .sum()
    }

    /// Sets every stored plan's `total_cost` to its current shared cost.
    pub fn refresh_costs(&mut self, model: &SharedCostModel<S>) {
        let costs: Vec<(AgentId, S)> = self
            .per_agent
            .keys()
            .map(|&a| (a, self.agent_cost(a, model).expect("agent present")))
            .collect();
        for (a, c) in costs {
            self.per_agent.get_mut(&a).expect("agent present").total_cost = c;
        }
    }

    pub fn to_record(&self, network: &TransitNetwork) -> JointPlanRecord {
        let id = |s: StopIx| network.stop_id(s).to_string();
        JointPlanRecord {
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), label)| JointEdgeRecord {
                    from: id(from),
                    to: id(to),
                    minutes: label.minutes,
                    agents: label.agents.iter().copied().collect(),
                })
                .collect(),
            plans: self.per_agent.values().map(|p| p.to_record(network)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEdgeRecord {
    pub from: String,
    pub to: String,
    pub minutes: Minutes,
    pub agents: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPlanRecord {
    pub edges: Vec<JointEdgeRecord>,
    pub plans: Vec<PlanRecord>,
}

/// Σ over edges of Σ_{k=1..|label|} shared_cost(c_e, k).
pub fn rosenthal_potential<S: Scalar>(joint: &JointPlan<S>, model: &SharedCostModel<S>) -> S {
    joint
        .edges
        .values()
        .map(|label| {
            let c = S::from_minutes(label.minutes);
            (1..=label.agents.len() as u32)
                .map(|k| model.shared_cost(c, k).expect("k >= 1"))
                .sum::<S>()
        })
        .sum()
}

/// Best reply of `agent` with everyone else's plan held fixed.
///
/// Each edge costs `shared_cost(c_e, 1 + m_e)` where `m_e` counts the other
/// agents on it. The current plan is kept unless the reply is cheaper by at
/// least [`CONVERGENCE_EPS`], and also when the destination has become
/// unreachable.
pub fn best_response_step<S: Scalar>(
    joint: &JointPlan<S>,
    agent: AgentId,
    graph: &RelaxedGraph,
    model: &SharedCostModel<S>,
) -> Result<Plan<S>> {
    let current = joint.plan(agent).ok_or(Error::UnknownAgent(agent.0))?;
    let current_cost = joint.agent_cost(agent, model)?;
    let (Some(origin), Some(destination)) = (current.origin(), current.destination()) else {
        return Ok(Plan {
            total_cost: current_cost,
            ..current.clone()
        });
    };
    let request = AgentRequest::new(agent, origin, destination);
    let reply = plan_individual(graph, &request, |e| {
        let n = 1 + joint.others_on(e.from, e.to, agent);
        model
            .shared_cost(S::from_minutes(e.min_duration), n)
            .expect("n >= 1")
    })?;
    match reply {
        Some(plan) if plan.total_cost.to_f64_lossy() + CONVERGENCE_EPS <= current_cost.to_f64_lossy() => Ok(plan),
        Some(_) => Ok(Plan {
            total_cost: current_cost,
            ..current.clone()
        }),
        None => {
            warn!("agent {agent}: destination unreachable during best response, keeping current plan");
            Ok(Plan {
                total_cost: current_cost,
                ..current.clone()
            })
        }
    }
}

/// One best-response step as seen by the potential monitor.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<S> {
    pub round: usize,
    pub agent: AgentId,
    pub changed: bool,
    pub cost_before: S,
    pub cost_after: S,
    pub potential_before: S,
    pub potential_after: S,
}

#[derive(Clone, Debug)]
pub struct BrOutcome<S> {
    pub joint: JointPlan<S>,
    pub rounds: usize,
    pub converged: bool,
    pub steps: Vec<StepRecord<S>>,
}

/// Round-robin best-response sweeps in ascending agent order.
///
/// Stops after a full sweep in which no agent switches plan, or after
/// `max_rounds` sweeps. A stable total joint cost is not enough: an improving
/// switch lowers the potential but can leave the total unchanged.
pub fn run_br_phase<S: Scalar>(
    initial: impl IntoIterator<Item = Plan<S>>,
    graph: &RelaxedGraph,
    model: &SharedCostModel<S>,
    max_rounds: usize,
) -> Result<BrOutcome<S>> {
    let mut joint = merge_plans(initial);
    let agents: Vec<AgentId> = joint.agents().collect();
    let mut steps = Vec::new();
    let mut previous_total = joint.total_cost(model).to_f64_lossy();
    let mut converged = false;
    let mut rounds = 0;

    while rounds < max_rounds {
        rounds += 1;
        let mut switched = false;
        for &agent in &agents {
            let cost_before = joint.agent_cost(agent, model)?;
            let potential_before = rosenthal_potential(&joint, model);
            let reply = best_response_step(&joint, agent, graph, model)?;
            let changed = reply.legs != joint.plan(agent).expect("agent present").legs;
            if changed {
                joint.replace_plan(reply);
                switched = true;
            }
            let cost_after = joint.agent_cost(agent, model)?;
            steps.push(StepRecord {
                round: rounds,
                agent,
                changed,
                cost_before,
                cost_after,
                potential_before,
                potential_after: rosenthal_potential(&joint, model),
            });
        }
        let total = joint.total_cost(model).to_f64_lossy();
        let delta = (previous_total - total).abs();
        debug!("best-response round {rounds}: joint cost {total:.3} (change {delta:.3e})");
        previous_total = total;
        if !switched {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("best-response phase stopped after {rounds} rounds without converging");
    }
    joint.refresh_costs(model);
    Ok(BrOutcome {
        joint,
        rounds,
        converged,
        steps,
    })
}

/// Largest cost reduction any single agent could still obtain.
pub fn max_unilateral_gain<S: Scalar>(
    joint: &JointPlan<S>,
    graph: &RelaxedGraph,
    model: &SharedCostModel<S>,
) -> Result<f64> {
    let mut gain = 0.0f64;
    for agent in joint.agents() {
        let now = joint.agent_cost(agent, model)?.to_f64_lossy();
        let request = {
            let p = joint.plan(agent).expect("agent present");
            match (p.origin(), p.destination()) {
                (Some(o), Some(d)) => AgentRequest::new(agent, o, d),
                _ => continue,
            }
        };
        let best = plan_individual(graph, &request, |e| {
            model
                .shared_cost(S::from_minutes(e.min_duration), 1 + joint.others_on(e.from, e.to, agent))
                .expect("n >= 1")
        })?;
        if let Some(best) = best {
            gain = gain.max(now - best.total_cost.to_f64_lossy());
        }
    }
    Ok(gain)
}

/// Convenience constructor for tests and fixtures: a plan from a stop sequence.
pub fn plan_from_stops<S: Scalar>(graph: &RelaxedGraph, agent: AgentId, stops: &[StopIx]) -> Result<Plan<S>> {
    let legs: Vec<Leg> = stops
        .windows(2)
        .map(|w| {
            graph
                .edge(w[0], w[1])
                .map(|e| Leg {
                    from: w[0],
                    to: w[1],
                    minutes: e.min_duration,
                })
                .ok_or_else(|| Error::MissingLeg {
                    from: w[0].to_string(),
                    to: w[1].to_string(),
                })
        })
        .collect::<Result<_>>()?;
    let total_cost = legs.iter().map(|l| S::from_minutes(l.minutes)).sum();
    Ok(Plan {
        agent,
        legs,
        total_cost,
    })
}
