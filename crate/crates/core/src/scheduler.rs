//! Timetabling phase: matching a group's parts to concrete runs.
//!
//! Parts are scheduled in topological order. Each part is ready once every
//! member has arrived at its first stop and gets the earliest-arriving
//! journey, boarded as late as that arrival allows. A backward pass then
//! moves parts that start every member's journey as late as their
//! successors permit, which trims waiting at the first transfer.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::{KeyValues, SCHED_LIMIT_LARGE, SCHED_LIMIT_MEDIUM, SCHED_LIMIT_SMALL};
use crate::error::Result;
use crate::groups::{agent_part_sequences, relevant_timetable, split_into_parts, topological_order, Group, Part, PartId, RelevantTimetable};
use crate::planner::{AgentId, Plan};
use crate::scalar::Scalar;
use crate::transit::{Minutes, StopIx, TransitNetwork, DAY_MINUTES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegMode {
    Service,
    Walk,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegAssignment {
    pub from: StopIx,
    pub to: StopIx,
    pub mode: LegMode,
    /// Run ridden for service legs.
    pub run_id: Option<String>,
    pub board: Minutes,
    pub alight: Minutes,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartSchedule {
    pub part: PartId,
    pub legs: Vec<LegAssignment>,
}

impl PartSchedule {
    pub fn board(&self) -> Minutes {
        self.legs[0].board
    }

    pub fn arrival(&self) -> Minutes {
        self.legs.last().expect("part schedules are non-empty").alight
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Itinerary {
    pub agent: AgentId,
    pub legs: Vec<LegAssignment>,
    pub depart: Minutes,
    pub arrive: Minutes,
}

impl Itinerary {
    fn from_legs(agent: AgentId, legs: Vec<LegAssignment>) -> Self {
        let depart = legs.first().map_or(0, |l| l.board);
        let arrive = legs.last().map_or(0, |l| l.alight);
        Self {
            agent,
            legs,
            depart,
            arrive,
        }
    }

    /// First boarding to final arrival, waits included.
    pub fn duration(&self) -> Minutes {
        self.arrive - self.depart
    }

    pub fn travel_minutes(&self) -> Minutes {
        self.legs.iter().map(|l| l.alight - l.board).sum()
    }

    pub fn to_record(&self, network: &TransitNetwork) -> ItineraryRecord {
        ItineraryRecord {
            agent: self.agent,
            legs: self
                .legs
                .iter()
                .map(|l| LegRecord {
                    from: network.stop_id(l.from).to_string(),
                    to: network.stop_id(l.to).to_string(),
                    mode: l.mode,
                    run_id: l.run_id.clone(),
                    board: l.board,
                    alight: l.alight,
                })
                .collect(),
            depart: self.depart,
            arrive: self.arrive,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSchedule {
    pub group: usize,
    pub part_schedules: BTreeMap<PartId, PartSchedule>,
    pub itineraries: BTreeMap<AgentId, Itinerary>,
}

impl GroupSchedule {
    pub fn total_duration(&self) -> Minutes {
        self.itineraries.values().map(Itinerary::duration).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub from: String,
    pub to: String,
    pub mode: LegMode,
    pub run_id: Option<String>,
    pub board: Minutes,
    pub alight: Minutes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItineraryRecord {
    pub agent: AgentId,
    pub legs: Vec<LegRecord>,
    pub depart: Minutes,
    pub arrive: Minutes,
}

/// Why a group did not get a timetable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Unscheduled {
    Infeasible(String),
    TimedOut,
}

impl std::fmt::Display for Unscheduled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unscheduled::Infeasible(why) => write!(f, "infeasible: {why}"),
            Unscheduled::TimedOut => f.write_str("time limit exceeded"),
        }
    }
}

/// Per-group wall-clock limits by group size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerConfig {
    pub small_s: f64,
    pub medium_s: f64,
    pub large_s: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            small_s: 300.0,
            medium_s: 600.0,
            large_s: 900.0,
        }
    }
}

impl SchedulerConfig {
    pub fn from_config(cfg: &KeyValues) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            small_s: cfg.get_or(SCHED_LIMIT_SMALL, d.small_s)?,
            medium_s: cfg.get_or(SCHED_LIMIT_MEDIUM, d.medium_s)?,
            large_s: cfg.get_or(SCHED_LIMIT_LARGE, d.large_s)?,
        })
    }
}

/// Seconds allowed for a group: small up to 5 agents, medium up to 10, large beyond.
pub fn time_limit_for(group_size: usize, config: &SchedulerConfig) -> f64 {
    assert!(group_size >= 1, "group size must be at least 1");
    match group_size {
        0..=5 => config.small_s,
        6..=10 => config.medium_s,
        _ => config.large_s,
    }
}

struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    fn none() -> Self {
        Self {
            start: Instant::now(),
            limit: None,
        }
    }

    fn after_secs(secs: f64) -> Self {
        Self {
            start: Instant::now(),
            limit: Some(Duration::from_secs_f64(secs.max(0.0))),
        }
    }

    fn check(&self) -> Result<(), Unscheduled> {
        match self.limit {
            Some(limit) if self.start.elapsed() >= limit => Err(Unscheduled::TimedOut),
            _ => Ok(()),
        }
    }
}

/// Departure time from a position and the hop taken onward from it.
type Onward = (i64, Option<(usize, Hop)>);

#[derive(Clone, Copy, Debug)]
enum Hop {
    /// Index into the relevant timetable's connections.
    Ride(usize),
    Walk(Minutes),
}

/// Moves available inside one part, indexed by departure position.
struct PartMoves<'a> {
    tt: &'a RelevantTimetable,
    stops: &'a [StopIx],
    len: usize,
    /// moves[i] = (target position, hop)
    moves: Vec<Vec<(usize, Hop)>>,
}

impl<'a> PartMoves<'a> {
    fn new(part: &'a Part, tt: &'a RelevantTimetable) -> Self {
        let len = part.stops.len();
        let mut moves = vec![Vec::new(); len];
        for (ci, c) in tt.connections.iter().enumerate() {
            if let (Some(i), Some(j)) = (part.position(c.from), part.position(c.to)) {
                if i < j {
                    moves[i].push((j, Hop::Ride(ci)));
                }
            }
        }
        for w in &tt.walks {
            if let (Some(i), Some(j)) = (part.position(w.from), part.position(w.to)) {
                if j == i + 1 {
                    moves[i].push((j, Hop::Walk(w.duration)));
                }
            }
        }
        Self {
            tt,
            stops: &part.stops,
            len,
            moves,
        }
    }

    /// Earliest arrival at the last stop when ready at the first stop at `ready`.
    fn earliest_arrival(&self, ready: Minutes, deadline: &Deadline) -> Result<Option<Minutes>, Unscheduled> {
        let mut best: Vec<Option<Minutes>> = vec![None; self.len];
        best[0] = Some(ready);
        for i in 0..self.len {
            deadline.check()?;
            let Some(at) = best[i] else { continue };
            for &(j, hop) in &self.moves[i] {
                let arr = match hop {
                    Hop::Ride(ci) => {
                        let c = &self.tt.connections[ci];
                        if c.departure < at {
                            continue;
                        }
                        c.arrival()
                    }
                    Hop::Walk(d) => at + d,
                };
                if arr <= DAY_MINUTES && best[j].is_none_or(|b| arr < b) {
                    best[j] = Some(arr);
                }
            }
        }
        Ok(best[self.len - 1])
    }

    /// Latest departure from the first stop that still reaches the last stop by `by`,
    /// with the legs realising it.
    fn latest_departure(&self, by: Minutes, deadline: &Deadline) -> Result<Option<Vec<LegAssignment>>, Unscheduled> {
        // latest[i] = departure time from position i and the hop taken onward
        let mut latest: Vec<Option<Onward>> = vec![None; self.len];
        latest[self.len - 1] = Some((i64::from(by), None));
        for i in (0..self.len - 1).rev() {
            deadline.check()?;
            for &(j, hop) in &self.moves[i] {
                let Some((need, _)) = latest[j] else { continue };
                let leave = match hop {
                    Hop::Ride(ci) => {
                        let c = &self.tt.connections[ci];
                        if i64::from(c.arrival()) > need {
                            continue;
                        }
                        i64::from(c.departure)
                    }
                    Hop::Walk(d) => need - i64::from(d),
                };
                if leave < 0 {
                    continue;
                }
                if latest[i].is_none_or(|(t, _)| leave > t) {
                    latest[i] = Some((leave, Some((j, hop))));
                }
            }
        }
        let Some((_, _)) = latest[0] else {
            return Ok(None);
        };
        let mut legs: Vec<LegAssignment> = Vec::new();
        let mut i = 0;
        while let Some((leave, Some((j, hop)))) = latest[i] {
            let leg = match hop {
                Hop::Ride(ci) => {
                    let c = &self.tt.connections[ci];
                    LegAssignment {
                        from: c.from,
                        to: c.to,
                        mode: LegMode::Service,
                        run_id: Some(c.run_id.clone()),
                        board: c.departure,
                        alight: c.arrival(),
                    }
                }
                Hop::Walk(d) => LegAssignment {
                    from: self.stops[i],
                    to: self.stops[j],
                    mode: LegMode::Walk,
                    run_id: None,
                    board: leave as Minutes,
                    alight: leave as Minutes + d,
                },
            };
            push_merged(&mut legs, leg);
            i = j;
        }
        Ok(Some(legs))
    }
}

/// Appends `leg`, folding it into the previous leg when both ride the same run.
fn push_merged(legs: &mut Vec<LegAssignment>, leg: LegAssignment) {
    if let Some(prev) = legs.last_mut() {
        if prev.mode == LegMode::Service && leg.mode == LegMode::Service && prev.run_id == leg.run_id && prev.to == leg.from {
            prev.to = leg.to;
            prev.alight = leg.alight;
            return;
        }
    }
    legs.push(leg);
}

fn tight_schedule(
    part: &Part,
    ready: Minutes,
    tt: &RelevantTimetable,
    deadline: &Deadline,
) -> Result<Option<PartSchedule>, Unscheduled> {
    let moves = PartMoves::new(part, tt);
    let Some(arrival) = moves.earliest_arrival(ready, deadline)? else {
        return Ok(None);
    };
    let legs = moves
        .latest_departure(arrival, deadline)?
        .expect("the earliest-arrival journey itself meets its own arrival");
    Ok(Some(PartSchedule { part: part.id, legs }))
}

/// Earliest-arriving journey along `part` that starts no earlier than `ready`.
///
/// Among journeys with that arrival the one boarding last is returned.
/// Returns `None` if the part's last stop cannot be reached within the day.
pub fn earliest_arrival_in_part(part: &Part, ready: Minutes, tt: &RelevantTimetable) -> Option<PartSchedule> {
    tight_schedule(part, ready, tt, &Deadline::none()).expect("no deadline set")
}

/// Latest-boarding journey along `part` that arrives no later than `by`.
pub fn latest_departure_in_part(part: &Part, by: Minutes, tt: &RelevantTimetable) -> Option<PartSchedule> {
    PartMoves::new(part, tt)
        .latest_departure(by, &Deadline::none())
        .expect("no deadline set")
        .map(|legs| PartSchedule { part: part.id, legs })
}

/// Schedules all parts of one group so members ride the same runs on shared parts.
pub fn schedule_group(parts: &[Part], tt: &RelevantTimetable, time_limit_s: f64) -> Result<GroupSchedule, Unscheduled> {
    let deadline = Deadline::after_secs(time_limit_s);
    let order = topological_order(parts).ok_or_else(|| Unscheduled::Infeasible("part precedence has a cycle".into()))?;
    let mut scheduled: BTreeMap<PartId, PartSchedule> = BTreeMap::new();

    for &pid in &order {
        deadline.check()?;
        let part = &parts[pid];
        let ready = part
            .prev
            .values()
            .map(|prev| scheduled[prev].arrival())
            .max()
            .unwrap_or(0);
        let sched = tight_schedule(part, ready, tt, &deadline)?.ok_or_else(|| {
            Unscheduled::Infeasible(format!("no connection completes part {pid} after minute {ready}"))
        })?;
        scheduled.insert(pid, sched);
    }

    for &pid in order.iter().rev() {
        let part = &parts[pid];
        if !part.is_journey_initial() {
            continue;
        }
        deadline.check()?;
        let by = if part.agents.iter().any(|a| !part.next.contains_key(a)) {
            scheduled[&pid].arrival()
        } else {
            part.next.values().map(|n| scheduled[n].board()).min().expect("members continue")
        };
        let moved = PartMoves::new(part, tt)
            .latest_departure(by, &deadline)?
            .expect("the forward schedule already meets this deadline");
        scheduled.insert(pid, PartSchedule { part: pid, legs: moved });
    }

    let mut itineraries = BTreeMap::new();
    for (agent, seq) in agent_part_sequences(parts) {
        let legs: Vec<LegAssignment> = seq.iter().flat_map(|p| scheduled[p].legs.iter().cloned()).collect();
        let itin = Itinerary::from_legs(agent, legs);
        if itin.duration() > DAY_MINUTES {
            return Err(Unscheduled::Infeasible(format!("agent {agent} needs more than a day")));
        }
        itineraries.insert(agent, itin);
    }
    Ok(GroupSchedule {
        group: tt.group,
        part_schedules: scheduled,
        itineraries,
    })
}

/// Schedules one agent's relaxed plan on its own, as a one-part group.
pub fn schedule_single_agent<S: Scalar>(
    plan: &Plan<S>,
    network: &TransitNetwork,
    time_limit_s: f64,
) -> Result<Itinerary, Unscheduled> {
    if plan.legs.is_empty() {
        return Err(Unscheduled::Infeasible("empty plan".into()));
    }
    let group = Group::single(0, plan.agent, plan.legs.clone());
    let parts = split_into_parts(&group);
    let tt = relevant_timetable(0, &parts, network);
    let mut schedule = schedule_group(&parts, &tt, time_limit_s)?;
    Ok(schedule.itineraries.remove(&plan.agent).expect("the agent is the only member"))
}

/// Checks a schedule's temporal invariants against its parts and timetable.
pub fn check_group_schedule(schedule: &GroupSchedule, parts: &[Part], tt: &RelevantTimetable) -> std::result::Result<(), String> {
    for part in parts {
        let ps = schedule
            .part_schedules
            .get(&part.id)
            .ok_or_else(|| format!("part {} unscheduled", part.id))?;
        if ps.legs.first().map(|l| l.from) != Some(part.start()) || ps.legs.last().map(|l| l.to) != Some(part.end()) {
            return Err(format!("part {} schedule does not span its stops", part.id));
        }
        let mut last_pos = 0;
        for leg in &ps.legs {
            let (Some(i), Some(j)) = (part.position(leg.from), part.position(leg.to)) else {
                return Err(format!("part {} leg leaves the part", part.id));
            };
            if i != last_pos || j <= i {
                return Err(format!("part {} legs do not move forward along the part", part.id));
            }
            last_pos = j;
            check_leg(leg, tt)?;
        }
    }
    for (agent, itin) in &schedule.itineraries {
        for w in itin.legs.windows(2) {
            if w[0].to != w[1].from {
                return Err(format!("agent {agent}: legs not chained in space"));
            }
            if w[1].board < w[0].alight {
                return Err(format!("agent {agent}: boards at {} before arriving at {}", w[1].board, w[0].alight));
            }
        }
        if itin.duration() > DAY_MINUTES || itin.arrive > DAY_MINUTES {
            return Err(format!("agent {agent}: journey exceeds the day"));
        }
        if itin.duration() < itin.travel_minutes() {
            return Err(format!("agent {agent}: duration shorter than time on the move"));
        }
    }
    for part in parts {
        let ps = &schedule.part_schedules[&part.id];
        for a in &part.agents {
            let itin = schedule.itineraries.get(a).ok_or_else(|| format!("agent {a} missing"))?;
            let contains = itin.legs.windows(ps.legs.len()).any(|w| w == ps.legs.as_slice());
            if !contains {
                return Err(format!("agent {a} does not ride part {} with the group", part.id));
            }
        }
    }
    Ok(())
}

fn check_leg(leg: &LegAssignment, tt: &RelevantTimetable) -> std::result::Result<(), String> {
    if leg.alight <= leg.board {
        return Err("leg alights before boarding".into());
    }
    match leg.mode {
        LegMode::Walk => {
            let ok = tt
                .walks
                .iter()
                .any(|w| w.from == leg.from && w.to == leg.to && w.duration == leg.alight - leg.board);
            ok.then_some(()).ok_or_else(|| "walk leg without matching walking link".to_string())
        }
        LegMode::Service => {
            let run = leg.run_id.as_deref().ok_or("service leg without run")?;
            let mut hops: Vec<_> = tt.connections.iter().filter(|c| c.run_id == run).collect();
            hops.sort_by_key(|c| c.seq);
            let start = hops
                .iter()
                .position(|c| c.from == leg.from && c.departure == leg.board)
                .ok_or_else(|| format!("run {run} does not depart {} at {}", leg.from, leg.board))?;
            let mut at = start;
            loop {
                let c = hops[at];
                if c.to == leg.to && c.arrival() == leg.alight {
                    return Ok(());
                }
                match hops.get(at + 1) {
                    Some(n) if n.seq == c.seq + 1 => at += 1,
                    _ => return Err(format!("run {run} does not continue from {} to {}", leg.from, leg.to)),
                }
            }
        }
    }
}
