//! Decomposition of a joint plan into independent groups and constant-label
//! parts, and extraction of the timetable slice each group needs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::best_response::{EdgeLabel, JointPlan};
use crate::error::{Error, Result};
use crate::planner::{AgentId, Leg};
use crate::scalar::Scalar;
use crate::transit::{StopIx, TimetabledConnection, TransitNetwork, WalkingLink};

pub type PartId = usize;

/// Weakly connected component of the joint plan with the agents travelling in it.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub id: usize,
    pub agents: BTreeSet<AgentId>,
    pub edges: BTreeMap<(StopIx, StopIx), EdgeLabel>,
    /// Each member's legs in travel order.
    pub plans: BTreeMap<AgentId, Vec<Leg>>,
}

impl Group {
    pub fn size(&self) -> usize {
        self.agents.len()
    }

    /// A one-member group following `legs`.
    pub fn single(id: usize, agent: AgentId, legs: Vec<Leg>) -> Self {
        let edges = legs
            .iter()
            .map(|l| {
                (
                    l.key(),
                    EdgeLabel {
                        minutes: l.minutes,
                        agents: BTreeSet::from([agent]),
                    },
                )
            })
            .collect();
        Self {
            id,
            agents: BTreeSet::from([agent]),
            edges,
            plans: BTreeMap::from([(agent, legs)]),
        }
    }
}

/// Maximal run of consecutive group edges used by one fixed set of agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Part {
    pub id: PartId,
    pub agents: BTreeSet<AgentId>,
    pub stops: Vec<StopIx>,
    pub prev: BTreeMap<AgentId, PartId>,
    pub next: BTreeMap<AgentId, PartId>,
}

impl Part {
    pub fn start(&self) -> StopIx {
        self.stops[0]
    }

    pub fn end(&self) -> StopIx {
        *self.stops.last().expect("parts have at least two stops")
    }

    pub fn edge_count(&self) -> usize {
        self.stops.len() - 1
    }

    /// Position of `stop` along the part, if it lies on it.
    pub fn position(&self, stop: StopIx) -> Option<usize> {
        self.stops.iter().position(|&s| s == stop)
    }

    /// True when no member reaches this part from an earlier one.
    pub fn is_journey_initial(&self) -> bool {
        self.prev.is_empty()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Splits the joint plan into weakly connected components.
///
/// Groups are numbered from 0 in order of their smallest member.
pub fn identify_groups<S: Scalar>(joint: &JointPlan<S>) -> Result<Vec<Group>> {
    let stops: Vec<StopIx> = joint
        .edges()
        .keys()
        .flat_map(|&(a, b)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: HashMap<StopIx, usize> = stops.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut uf = UnionFind::new(stops.len());
    for &(a, b) in joint.edges().keys() {
        uf.union(slot[&a], slot[&b]);
    }

    let mut by_root: BTreeMap<usize, Group> = BTreeMap::new();
    for (&agent, plan) in joint.plans() {
        let Some(first) = plan.legs.first() else { continue };
        let root = uf.find(slot[&first.from]);
        for leg in &plan.legs {
            if uf.find(slot[&leg.from]) != root {
                return Err(Error::Inconsistent(format!("agent {agent} spans two components")));
            }
        }
        let group = by_root.entry(root).or_insert_with(|| Group {
            id: 0,
            agents: BTreeSet::new(),
            edges: BTreeMap::new(),
            plans: BTreeMap::new(),
        });
        group.agents.insert(agent);
        group.plans.insert(agent, plan.legs.clone());
        for leg in &plan.legs {
            group
                .edges
                .insert(leg.key(), joint.edges()[&leg.key()].clone());
        }
    }
    let mut groups: Vec<Group> = by_root.into_values().collect();
    groups.sort_by_key(|g| *g.agents.first().expect("groups are non-empty"));
    for (i, g) in groups.iter_mut().enumerate() {
        g.id = i;
    }
    Ok(groups)
}

/// Cuts every member's journey wherever the set of co-travellers changes.
///
/// Parts are numbered in order of first appearance when walking members in
/// ascending id order along their journeys.
pub fn split_into_parts(group: &Group) -> Vec<Part> {
    let mut parts: Vec<Part> = Vec::new();
    let mut by_first_edge: HashMap<(StopIx, StopIx), PartId> = HashMap::new();
    let mut sequences: BTreeMap<AgentId, Vec<PartId>> = BTreeMap::new();

    for (&agent, legs) in &group.plans {
        let mut seq = Vec::new();
        let mut k = 0;
        while k < legs.len() {
            let label = &group.edges[&legs[k].key()].agents;
            let mut end = k + 1;
            while end < legs.len() && &group.edges[&legs[end].key()].agents == label {
                end += 1;
            }
            let id = *by_first_edge.entry(legs[k].key()).or_insert_with(|| {
                let mut stops: Vec<StopIx> = legs[k..end].iter().map(|l| l.from).collect();
                stops.push(legs[end - 1].to);
                parts.push(Part {
                    id: parts.len(),
                    agents: label.clone(),
                    stops,
                    prev: BTreeMap::new(),
                    next: BTreeMap::new(),
                });
                parts.len() - 1
            });
            seq.push(id);
            k = end;
        }
        sequences.insert(agent, seq);
    }
    for (agent, seq) in sequences {
        for w in seq.windows(2) {
            parts[w[1]].prev.insert(agent, w[0]);
            parts[w[0]].next.insert(agent, w[1]);
        }
    }
    parts
}

/// Each member's parts in travel order.
pub fn agent_part_sequences(parts: &[Part]) -> BTreeMap<AgentId, Vec<PartId>> {
    let mut out = BTreeMap::new();
    for p in parts {
        for &a in &p.agents {
            if !p.prev.contains_key(&a) {
                let mut seq = vec![p.id];
                let mut cur = p.id;
                while let Some(&n) = parts[cur].next.get(&a) {
                    seq.push(n);
                    cur = n;
                }
                out.insert(a, seq);
            }
        }
    }
    out
}

/// Topological order of the part precedence relation, or `None` if it has a cycle.
pub fn topological_order(parts: &[Part]) -> Option<Vec<PartId>> {
    let mut indegree: Vec<usize> = vec![0; parts.len()];
    let mut succ: Vec<BTreeSet<PartId>> = vec![BTreeSet::new(); parts.len()];
    for p in parts {
        for &n in p.next.values() {
            if succ[p.id].insert(n) {
                indegree[n] += 1;
            }
        }
    }
    let mut ready: VecDeque<PartId> = (0..parts.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(parts.len());
    while let Some(p) = ready.pop_front() {
        order.push(p);
        for &n in &succ[p] {
            indegree[n] -= 1;
            if indegree[n] == 0 {
                ready.push_back(n);
            }
        }
    }
    (order.len() == parts.len()).then_some(order)
}

/// Timetable slice for one group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelevantTimetable {
    pub group: usize,
    pub connections: Vec<TimetabledConnection>,
    pub walks: Vec<WalkingLink>,
}

impl RelevantTimetable {
    pub fn len(&self) -> usize {
        self.connections.len() + self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every connection running forward between two stops of the same part,
/// whether the service stops in between or not, plus walking links between
/// consecutive part stops.
pub fn relevant_timetable(group: usize, parts: &[Part], network: &TransitNetwork) -> RelevantTimetable {
    let mut on_parts: HashMap<StopIx, Vec<(PartId, usize)>> = HashMap::new();
    for p in parts {
        for (pos, &s) in p.stops.iter().enumerate() {
            on_parts.entry(s).or_default().push((p.id, pos));
        }
    }
    let mut connections = Vec::new();
    let mut from_stops: Vec<&StopIx> = on_parts.keys().collect();
    from_stops.sort();
    for &stop in from_stops {
        let here = &on_parts[&stop];
        for c in network.departures_from(stop) {
            let Some(there) = on_parts.get(&c.to) else { continue };
            let forward = here
                .iter()
                .any(|&(p, i)| there.iter().any(|&(q, j)| p == q && i < j));
            if forward {
                connections.push(c.clone());
            }
        }
    }
    let mut seen = HashSet::new();
    let mut walks = Vec::new();
    for p in parts {
        for w in p.stops.windows(2) {
            if let Some(duration) = network.walking_duration(w[0], w[1]) {
                if seen.insert((w[0], w[1])) {
                    walks.push(WalkingLink {
                        from: w[0],
                        to: w[1],
                        duration,
                    });
                }
            }
        }
    }
    RelevantTimetable {
        group,
        connections,
        walks,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub stops: Vec<String>,
    pub agents: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: usize,
    pub agents: Vec<AgentId>,
    pub parts: Vec<PartRecord>,
}

impl GroupRecord {
    pub fn new(group: &Group, parts: &[Part], network: &TransitNetwork) -> Self {
        Self {
            group_id: group.id,
            agents: group.agents.iter().copied().collect(),
            parts: parts
                .iter()
                .map(|p| PartRecord {
                    stops: p.stops.iter().map(|&s| network.stop_id(s).to_string()).collect(),
                    agents: p.agents.iter().copied().collect(),
                })
                .collect(),
        }
    }
}
