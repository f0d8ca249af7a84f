//! Independent reference implementations used by the integration tests.
//!
//! Everything here is deliberately naive: exhaustive enumeration instead of
//! label-setting search, direct set construction instead of incremental
//! updates.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use journey_sharing::groups::Part;
use journey_sharing::planner::{AgentId, Leg, Plan};
use journey_sharing::scheduler::{GroupSchedule, LegMode};
use journey_sharing::transit::{
    ConnectionRecord, EdgeBacking, Minutes, Mode, RelaxedEdge, RelaxedGraph, StopIx, StopRecord, TransitNetwork,
};
use rand::Rng;

pub const DAY: Minutes = 1440;

// ---------------------------------------------------------------------------
// Relaxed graphs and paths

pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> RelaxedGraph {
    let n = rng.gen_range(2..=max_nodes);
    let density = rng.gen_range(0.2..0.7);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(density) {
                edges.push(RelaxedEdge {
                    from: StopIx(a as u32),
                    to: StopIx(b as u32),
                    min_duration: rng.gen_range(1..=20),
                    backing: EdgeBacking::Walk,
                });
            }
        }
    }
    RelaxedGraph::from_edges(n, edges)
}

/// Every simple path from `from` to `to`, as stop sequences.
pub fn simple_paths(g: &RelaxedGraph, from: StopIx, to: StopIx) -> Vec<Vec<StopIx>> {
    fn go(g: &RelaxedGraph, path: &mut Vec<StopIx>, to: StopIx, out: &mut Vec<Vec<StopIx>>) {
        let here = *path.last().unwrap();
        if here == to {
            out.push(path.clone());
            return;
        }
        for e in g.edges().iter().filter(|e| e.from == here) {
            if !path.contains(&e.to) {
                path.push(e.to);
                go(g, path, to, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if from != to {
        go(g, &mut vec![from], to, &mut out);
    }
    out
}

/// A random self-avoiding walk of at least one edge, or `None` from a dead end.
pub fn random_simple_path<R: Rng>(rng: &mut R, g: &RelaxedGraph) -> Option<Vec<StopIx>> {
    let mut path = vec![StopIx(rng.gen_range(0..g.node_count()) as u32)];
    loop {
        let here = *path.last().unwrap();
        let options: Vec<StopIx> = g.edges().iter().filter(|e| e.from == here && !path.contains(&e.to)).map(|e| e.to).collect();
        if options.is_empty() || (path.len() > 1 && rng.gen_bool(0.3)) {
            break;
        }
        path.push(options[rng.gen_range(0..options.len())]);
    }
    (path.len() > 1).then_some(path)
}

pub fn plan_of(g: &RelaxedGraph, agent: u32, stops: &[StopIx]) -> Plan<f64> {
    let legs: Vec<Leg> = stops
        .windows(2)
        .map(|w| Leg {
            from: w[0],
            to: w[1],
            minutes: g.edges().iter().find(|e| e.from == w[0] && e.to == w[1]).unwrap().min_duration,
        })
        .collect();
    Plan {
        agent: AgentId(agent),
        total_cost: legs.iter().map(|l| f64::from(l.minutes)).sum(),
        legs,
    }
}

/// The group-discount formula written out directly.
pub fn discounted(c: f64, n: usize) -> f64 {
    c * (0.8 / n as f64 + 0.2)
}

/// Cost `agent` would pay on `path` if everyone else kept their plans.
pub fn occupancy_cost(path: &[StopIx], agent: AgentId, plans: &[Plan<f64>], g: &RelaxedGraph) -> f64 {
    path.windows(2)
        .map(|w| {
            let c = f64::from(g.edges().iter().find(|e| e.from == w[0] && e.to == w[1]).unwrap().min_duration);
            let others = plans
                .iter()
                .filter(|p| p.agent != agent && p.legs.iter().any(|l| l.from == w[0] && l.to == w[1]))
                .count();
            discounted(c, 1 + others)
        })
        .sum()
}

/// Cost `agent` pays for its own plan given all plans.
pub fn own_cost(agent: AgentId, plans: &[Plan<f64>], g: &RelaxedGraph) -> f64 {
    let p = plans.iter().find(|p| p.agent == agent).unwrap();
    let mut stops = vec![p.legs[0].from];
    stops.extend(p.legs.iter().map(|l| l.to));
    occupancy_cost(&stops, agent, plans, g)
}

/// Edge → agents using it, built by scanning every plan.
pub fn membership(plans: &[Plan<f64>]) -> BTreeMap<(StopIx, StopIx), BTreeSet<AgentId>> {
    let mut out: BTreeMap<(StopIx, StopIx), BTreeSet<AgentId>> = BTreeMap::new();
    let mut last: BTreeMap<AgentId, &Plan<f64>> = BTreeMap::new();
    for p in plans {
        last.insert(p.agent, p);
    }
    for p in last.values() {
        for l in &p.legs {
            out.entry((l.from, l.to)).or_default().insert(p.agent);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scheduling instances

/// One group's plans plus the network they are scheduled on.
pub struct SchedInstance {
    pub network: TransitNetwork,
    pub paths: Vec<Vec<StopIx>>,
}

impl SchedInstance {
    pub fn plans(&self) -> Vec<Plan<f64>> {
        self.paths
            .iter()
            .enumerate()
            .map(|(a, p)| Plan {
                agent: AgentId(a as u32),
                legs: p.windows(2).map(|w| Leg { from: w[0], to: w[1], minutes: 10 }).collect(),
                total_cost: 10.0 * (p.len() - 1) as f64,
            })
            .collect()
    }
}

/// A random group with at most three parts and at most `max_conns` connections.
pub fn random_sched_instance<R: Rng>(rng: &mut R, max_conns: usize) -> SchedInstance {
    let mut next = 0u32;
    let mut fresh = |k: usize| -> Vec<u32> {
        let v: Vec<u32> = (next..next + k as u32).collect();
        next += k as u32;
        v
    };
    let shared_len = rng.gen_range(2..=4);
    let paths: Vec<Vec<u32>> = match rng.gen_range(0..7) {
        0 => vec![fresh(rng.gen_range(2..=5))],
        1 => {
            let p = fresh(shared_len);
            vec![p.clone(), p]
        }
        2 => {
            // two feeders joining a shared tail
            let (a, b, s) = (fresh(rng.gen_range(1..=3)), fresh(rng.gen_range(1..=3)), fresh(shared_len));
            vec![[a, s.clone()].concat(), [b, s].concat()]
        }
        3 => {
            // shared head splitting in two
            let (s, a, b) = (fresh(shared_len), fresh(rng.gen_range(1..=3)), fresh(rng.gen_range(1..=3)));
            vec![[s.clone(), a].concat(), [s, b].concat()]
        }
        4 => {
            let (s, a) = (fresh(shared_len), fresh(rng.gen_range(1..=3)));
            vec![[s.clone(), a].concat(), s]
        }
        5 => {
            let (a, s) = (fresh(rng.gen_range(1..=3)), fresh(shared_len));
            vec![[a, s.clone()].concat(), s]
        }
        _ => {
            let (a, s) = (fresh(rng.gen_range(1..=3)), fresh(shared_len));
            let full = [a, s.clone()].concat();
            vec![full.clone(), full, s]
        }
    };
    let n_stops = paths.iter().flatten().max().unwrap() + 1;
    let id = |i: u32| format!("S{i:02}");
    let stops: Vec<StopRecord> = (0..n_stops)
        .map(|i| StopRecord {
            stop_id: id(i),
            name: id(i),
            lat: 50.0 + f64::from(i) * 0.1,
            lon: 0.0,
            mode: Mode::Rail,
        })
        .collect();

    let mut conns = Vec::new();
    let mut run = 0;
    while conns.len() < max_conns {
        let p = &paths[rng.gen_range(0..paths.len())];
        let i = rng.gen_range(0..p.len() - 1);
        let j = rng.gen_range(i + 1..p.len());
        let mut t = rng.gen_range(300..1000);
        let rid = format!("R{run:02}");
        run += 1;
        if rng.gen_bool(0.35) && j > i + 1 {
            // a stopping run along consecutive stops
            if conns.len() + (j - i) > max_conns {
                break;
            }
            for (seq, k) in (i..j).enumerate() {
                let d = rng.gen_range(3..25);
                conns.push(ConnectionRecord {
                    service_id: format!("SV{}", run % 3),
                    run_id: rid.clone(),
                    seq: seq as u32 + 1,
                    from_stop: id(p[k]),
                    to_stop: id(p[k + 1]),
                    departure_min: t,
                    duration_min: d,
                });
                t += d + rng.gen_range(0..4);
            }
        } else {
            conns.push(ConnectionRecord {
                service_id: format!("SV{}", run % 3),
                run_id: rid,
                seq: 1,
                from_stop: id(p[i]),
                to_stop: id(p[j]),
                departure_min: t,
                duration_min: rng.gen_range(5..40) * (j - i) as u32,
            });
        }
    }
    let mut network = TransitNetwork::from_records(stops, conns).unwrap();
    for p in &paths {
        for w in p.windows(2) {
            if rng.gen_bool(0.1) {
                network.insert_walking_link(StopIx(w[0]), StopIx(w[1]), rng.gen_range(20..90));
            }
        }
    }
    SchedInstance {
        network,
        paths: paths.into_iter().map(|p| p.into_iter().map(StopIx).collect()).collect(),
    }
}

#[derive(Clone, Copy, Debug)]
enum Hop {
    Ride { dep: Minutes, arr: Minutes },
    Walk(Minutes),
}

/// All ways through a part: rides between any earlier and later stop on it,
/// walks between neighbouring stops.
fn hop_sequences(stops: &[StopIx], network: &TransitNetwork) -> Vec<Vec<Hop>> {
    let pos = |s: StopIx| stops.iter().position(|&x| x == s);
    let mut out_of: Vec<Vec<(usize, Hop)>> = vec![Vec::new(); stops.len()];
    for c in network.connections() {
        if let (Some(i), Some(j)) = (pos(c.from), pos(c.to)) {
            if i < j {
                out_of[i].push((j, Hop::Ride { dep: c.departure, arr: c.departure + c.duration }));
            }
        }
    }
    for i in 0..stops.len() - 1 {
        if let Some(d) = network.walking_duration(stops[i], stops[i + 1]) {
            out_of[i].push((i + 1, Hop::Walk(d)));
        }
    }
    fn go(i: usize, last: usize, out_of: &[Vec<(usize, Hop)>], cur: &mut Vec<Hop>, all: &mut Vec<Vec<Hop>>) {
        if i == last {
            all.push(cur.clone());
            return;
        }
        for &(j, h) in &out_of[i] {
            cur.push(h);
            go(j, last, out_of, cur, all);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    go(0, stops.len() - 1, &out_of, &mut Vec::new(), &mut all);
    all
}

fn forward(seq: &[Hop], ready: Minutes) -> Option<Minutes> {
    let mut t = ready;
    for h in seq {
        t = match *h {
            Hop::Ride { dep, arr } if dep >= t => arr,
            Hop::Ride { .. } => return None,
            Hop::Walk(d) => t + d,
        };
        if t > DAY {
            return None;
        }
    }
    Some(t)
}

fn backward(seq: &[Hop], by: Minutes) -> Option<Minutes> {
    let mut t = i64::from(by);
    for h in seq.iter().rev() {
        t = match *h {
            Hop::Ride { dep, arr } if i64::from(arr) <= t => i64::from(dep),
            Hop::Ride { .. } => return None,
            Hop::Walk(d) => t - i64::from(d),
        };
        if t < 0 {
            return None;
        }
    }
    Some(t as Minutes)
}

/// Total group duration under the forward/backward policy, found by trying
/// every hop sequence of every part. `None` when some part cannot be completed.
pub fn oracle_total_duration(parts: &[Part], paths: &BTreeMap<AgentId, Vec<StopIx>>, network: &TransitNetwork) -> Option<Minutes> {
    // Each agent's parts in travel order, from where the part starts on its path.
    let mut seq_of: BTreeMap<AgentId, Vec<usize>> = BTreeMap::new();
    for (a, path) in paths {
        let mut mine: Vec<usize> = (0..parts.len()).filter(|&p| parts[p].agents.contains(a)).collect();
        mine.sort_by_key(|&p| path.iter().position(|&s| s == parts[p].stops[0]).unwrap());
        seq_of.insert(*a, mine);
    }
    let pred = |p: usize| -> Vec<usize> {
        seq_of
            .values()
            .filter_map(|s| s.iter().position(|&x| x == p).and_then(|i| i.checked_sub(1)).map(|i| s[i]))
            .collect()
    };
    let succ = |p: usize| -> Vec<usize> { seq_of.values().filter_map(|s| s.iter().position(|&x| x == p).and_then(|i| s.get(i + 1).copied())).collect() };
    let seqs: Vec<Vec<Vec<Hop>>> = parts.iter().map(|p| hop_sequences(&p.stops, network)).collect();

    let mut board: BTreeMap<usize, Minutes> = BTreeMap::new();
    let mut arrive: BTreeMap<usize, Minutes> = BTreeMap::new();
    while arrive.len() < parts.len() {
        let p = (0..parts.len())
            .find(|&p| !arrive.contains_key(&p) && pred(p).iter().all(|q| arrive.contains_key(q)))
            .expect("acyclic");
        let ready = pred(p).iter().map(|q| arrive[q]).max().unwrap_or(0);
        let arr = seqs[p].iter().filter_map(|s| forward(s, ready)).min()?;
        let dep = seqs[p].iter().filter_map(|s| backward(s, arr)).max().unwrap();
        board.insert(p, dep);
        arrive.insert(p, arr);
    }
    for p in 0..parts.len() {
        if !pred(p).is_empty() || parts[p].agents.iter().any(|a| seq_of[a][0] != p) {
            continue;
        }
        let ends_here = parts[p].agents.iter().any(|a| *seq_of[a].last().unwrap() == p);
        let by = if ends_here { arrive[&p] } else { succ(p).iter().map(|q| board[q]).min().unwrap() };
        board.insert(p, seqs[p].iter().filter_map(|s| backward(s, by)).max().unwrap());
    }
    let mut total = 0;
    for s in seq_of.values() {
        let d = arrive[s.last().unwrap()] - board[&s[0]];
        if d > DAY {
            return None;
        }
        total += d;
    }
    Some(total)
}

/// Independent feasibility check of a returned schedule. Returns the first problem found.
pub fn schedule_problems(
    schedule: &GroupSchedule,
    parts: &[Part],
    paths: &BTreeMap<AgentId, Vec<StopIx>>,
    network: &TransitNetwork,
) -> Option<String> {
    let on_one_part = |a: StopIx, b: StopIx| {
        parts.iter().any(|p| {
            let i = p.stops.iter().position(|&s| s == a);
            let j = p.stops.iter().position(|&s| s == b);
            matches!((i, j), (Some(i), Some(j)) if i < j)
        })
    };
    for (agent, path) in paths {
        let Some(it) = schedule.itineraries.get(agent) else {
            return Some(format!("agent {agent} has no itinerary"));
        };
        if it.legs.first().map(|l| l.from) != Some(path[0]) || it.legs.last().map(|l| l.to) != path.last().copied() {
            return Some(format!("agent {agent} does not travel origin to destination"));
        }
        if it.arrive > DAY || it.arrive - it.depart > DAY {
            return Some(format!("agent {agent} exceeds the day"));
        }
        for w in it.legs.windows(2) {
            if w[0].to != w[1].from {
                return Some(format!("agent {agent}: legs do not chain"));
            }
            if w[1].board < w[0].alight {
                return Some(format!("agent {agent}: boards before arriving"));
            }
        }
        for l in &it.legs {
            if !on_one_part(l.from, l.to) {
                return Some(format!("agent {agent}: leg leaves its part"));
            }
            match l.mode {
                LegMode::Walk => {
                    if network.walking_duration(l.from, l.to) != Some(l.alight - l.board) {
                        return Some(format!("agent {agent}: walk does not match a link"));
                    }
                }
                LegMode::Service => {
                    let run = l.run_id.as_deref().unwrap_or_default();
                    let conns: Vec<_> = network.connections().iter().filter(|c| c.run_id == run).collect();
                    let Some(start) = conns.iter().position(|c| c.from == l.from && c.departure == l.board) else {
                        return Some(format!("agent {agent}: no run {run} departure"));
                    };
                    let Some(end) = conns[start..].iter().position(|c| c.to == l.to).map(|k| k + start) else {
                        return Some(format!("agent {agent}: run {run} does not reach the stop"));
                    };
                    if conns[end].departure + conns[end].duration != l.alight {
                        return Some(format!("agent {agent}: wrong alighting time on {run}"));
                    }
                }
            }
        }
    }
    // Members of a shared part ride exactly the same legs on it.
    for p in parts.iter().filter(|p| p.agents.len() > 1) {
        let slice = |a: &AgentId| {
            let legs = &schedule.itineraries[a].legs;
            let i = legs.iter().position(|l| l.from == p.stops[0]).unwrap();
            let j = legs.iter().position(|l| l.to == *p.stops.last().unwrap()).unwrap();
            legs[i..=j].to_vec()
        };
        let mut members = p.agents.iter();
        let first = slice(members.next().unwrap());
        if members.any(|a| slice(a) != first) {
            return Some(format!("members of part {} ride different runs", p.id));
        }
    }
    None
}
