//! Cost-optimal single-agent journeys on the relaxed graph.
//!
//! Used for the initial per-agent plans and, with occupancy-adjusted edge
//! costs, as the inner solver of every best-response step.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transit::{Minutes, RelaxedEdge, RelaxedGraph, StopIx, TransitNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AgentRequest {
    pub agent: AgentId,
    pub origin: StopIx,
    pub destination: StopIx,
}

impl AgentRequest {
    pub fn new(agent: AgentId, origin: StopIx, destination: StopIx) -> Self {
        Self {
            agent,
            origin,
            destination,
        }
    }
}

/// One hop of a relaxed plan together with its solo travel time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Leg {
    pub from: StopIx,
    pub to: StopIx,
    pub minutes: Minutes,
}

impl Leg {
    pub fn key(&self) -> (StopIx, StopIx) {
        (self.from, self.to)
    }
}

/// A chained, cycle-free sequence of relaxed edges for one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan<S> {
    pub agent: AgentId,
    pub legs: Vec<Leg>,
    /// Sum of leg costs under the cost model the plan was computed with.
    pub total_cost: S,
}

impl<S: Scalar> Plan<S> {
    pub fn origin(&self) -> Option<StopIx> {
        self.legs.first().map(|l| l.from)
    }

    pub fn destination(&self) -> Option<StopIx> {
        self.legs.last().map(|l| l.to)
    }

    /// Visited stops in order, origin first.
    pub fn stops(&self) -> Vec<StopIx> {
        let mut out: Vec<StopIx> = self.legs.iter().map(|l| l.from).collect();
        out.extend(self.destination());
        out
    }

    /// Solo travel time: the sum of leg minutes.
    pub fn solo_minutes(&self) -> Minutes {
        self.legs.iter().map(|l| l.minutes).sum()
    }

    pub fn is_chained(&self) -> bool {
        self.legs.windows(2).all(|w| w[0].to == w[1].from)
    }

    pub fn is_simple(&self) -> bool {
        let mut stops = self.stops();
        let n = stops.len();
        stops.sort();
        stops.dedup();
        stops.len() == n
    }

    pub fn to_record(&self, network: &TransitNetwork) -> PlanRecord {
        let id = |s: StopIx| network.stop_id(s).to_string();
        PlanRecord {
            agent: self.agent,
            origin: self.origin().map(id).unwrap_or_default(),
            destination: self.destination().map(id).unwrap_or_default(),
            legs: self.legs.iter().map(|l| [id(l.from), id(l.to)]).collect(),
            cost: self.total_cost.to_f64_lossy(),
        }
    }
}

/// JSON-lines form of a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub agent: AgentId,
    pub origin: String,
    pub destination: String,
    pub legs: Vec<[String; 2]>,
    pub cost: f64,
}

/// Edge cost equal to the edge's minimum solo duration.
pub fn duration_cost<S: Scalar>(edge: &RelaxedEdge) -> S {
    S::from_minutes(edge.min_duration)
}

struct Queued<S> {
    cost: S,
    legs: u32,
    node: u32,
}

impl<S: PartialOrd> Ord for Queued<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.legs.cmp(&self.legs))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl<S: PartialOrd> PartialOrd for Queued<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: PartialOrd> PartialEq for Queued<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: PartialOrd> Eq for Queued<S> {}

#[derive(Clone, Copy)]
struct Label<S> {
    cost: S,
    legs: u32,
    /// Index into `graph.edges()` of the edge used to reach the node.
    via: Option<usize>,
}

fn path_nodes<S>(graph: &RelaxedGraph, labels: &[Option<Label<S>>], mut node: StopIx) -> Vec<StopIx> {
    let mut out = vec![node];
    while let Some(Some(Label { via: Some(e), .. })) = labels.get(node.index()) {
        node = graph.edges()[*e].from;
        out.push(node);
    }
    out.reverse();
    out
}

/// Minimum-cost path from `request.origin` to `request.destination`.
///
/// Among equal-cost paths the one with fewer legs wins, then the one whose
/// stop sequence is lexicographically smallest. Returns `Ok(None)` when the
/// destination is unreachable. `edge_cost` must be non-negative.
pub fn plan_individual<S, F>(graph: &RelaxedGraph, request: &AgentRequest, edge_cost: F) -> Result<Option<Plan<S>>>
where
    S: Scalar,
    F: Fn(&RelaxedEdge) -> S,
{
    for stop in [request.origin, request.destination] {
        if !graph.contains(stop) {
            return Err(Error::UnknownStop(stop.to_string()));
        }
    }
    if request.origin == request.destination {
        return Err(Error::InvalidRequest(format!(
            "agent {} has identical origin and destination",
            request.agent
        )));
    }

    let mut labels: Vec<Option<Label<S>>> = vec![None; graph.node_count()];
    let mut settled = vec![false; graph.node_count()];
    let mut heap = BinaryHeap::new();
    labels[request.origin.index()] = Some(Label {
        cost: S::zero(),
        legs: 0,
        via: None,
    });
    heap.push(Queued {
        cost: S::zero(),
        legs: 0,
        node: request.origin.0,
    });

    while let Some(Queued { node, .. }) = heap.pop() {
        let u = StopIx(node);
        if settled[u.index()] {
            continue;
        }
        settled[u.index()] = true;
        if u == request.destination {
            break;
        }
        let here = labels[u.index()].expect("queued nodes are labelled");
        for ei in graph.out_range(u) {
            let e = &graph.edges()[ei];
            let v = e.to;
            if settled[v.index()] {
                continue;
            }
            let c = edge_cost(e);
            debug_assert!(c >= S::zero(), "edge costs must be non-negative");
            let cand = Label {
                cost: here.cost + c,
                legs: here.legs + 1,
                via: Some(ei),
            };
            let better = match &labels[v.index()] {
                None => true,
                Some(cur) => match cand.cost.partial_cmp(&cur.cost) {
                    Some(Ordering::Less) => true,
                    Some(Ordering::Greater) | None => false,
                    Some(Ordering::Equal) => match cand.legs.cmp(&cur.legs) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => {
                            let cur_from = graph.edges()[cur.via.expect("non-origin label has an edge")].from;
                            path_nodes(graph, &labels, u) < path_nodes(graph, &labels, cur_from)
                        }
                    },
                },
            };
            if better {
                labels[v.index()] = Some(cand);
                heap.push(Queued {
                    cost: cand.cost,
                    legs: cand.legs,
                    node: v.0,
                });
            }
        }
    }

    let Some(end) = labels[request.destination.index()] else {
        return Ok(None);
    };
    let nodes = path_nodes(graph, &labels, request.destination);
    let legs = nodes
        .windows(2)
        .map(|w| Leg {
            from: w[0],
            to: w[1],
            minutes: graph.edge(w[0], w[1]).expect("path follows graph edges").min_duration,
        })
        .collect();
    Ok(Some(Plan {
        agent: request.agent,
        legs,
        total_cost: end.cost,
    }))
}

/// Sum of `edge_cost` over the plan's legs; fails if a leg is not a graph edge.
pub fn plan_cost<S, F>(graph: &RelaxedGraph, plan: &Plan<S>, edge_cost: F) -> Result<S>
where
    S: Scalar,
    F: Fn(&RelaxedEdge) -> S,
{
    plan.legs.iter().try_fold(S::zero(), |acc, leg| {
        let e = graph.edge(leg.from, leg.to).ok_or_else(|| Error::MissingLeg {
            from: leg.from.to_string(),
            to: leg.to.to_string(),
        })?;
        Ok(acc + edge_cost(e))
    })
}
