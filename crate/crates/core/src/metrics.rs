//! Evaluation quantities: relative cost improvement, relative journey
//! prolongation, timetable success rates, and the `results.csv` table.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::best_response::{JointPlan, SharedCostModel};
use crate::error::{Error, Result};
use crate::planner::{AgentId, Plan};
use crate::scalar::Scalar;
use crate::scheduler::Itinerary;
use crate::transit::Minutes;

/// Groups whose journeys grow by less than this fraction count as benefiting.
pub const PROLONGATION_THRESHOLD: f64 = 0.30;

/// `(Σ C_i − Σ C'_i) / Σ C_i` over the agents that have an initial plan.
pub fn cost_improvement<S: Scalar>(initial: &[Plan<S>], joint: &JointPlan<S>, model: &SharedCostModel<S>) -> Result<S> {
    let solo: S = initial
        .iter()
        .flat_map(|p| p.legs.iter().map(|l| S::from_minutes(l.minutes)))
        .sum();
    if solo == S::zero() {
        return Err(Error::ZeroInitialCost);
    }
    let shared = initial
        .iter()
        .map(|p| joint.agent_cost(p.agent, model))
        .sum::<Result<S>>()?;
    Ok((solo - shared) / solo)
}

/// `(Σ T_group − Σ T_solo) / Σ T_solo`.
pub fn relative_prolongation(group_total: Minutes, solo_total: Minutes) -> Option<f64> {
    (solo_total > 0).then(|| (f64::from(group_total) - f64::from(solo_total)) / f64::from(solo_total))
}

/// Prolongation of a group, or `None` if some member lacks a solo itinerary.
pub fn prolongation(group: &BTreeMap<AgentId, Itinerary>, solo: &BTreeMap<AgentId, Itinerary>) -> Option<f64> {
    let mut g = 0;
    let mut s = 0;
    for (agent, itin) in group {
        g += itin.duration();
        s += solo.get(agent)?.duration();
    }
    relative_prolongation(g, s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub initial_ms: f64,
    pub br_ms: f64,
    pub timetabling_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group_id: usize,
    pub size: usize,
    pub matched: bool,
    pub timed_out: bool,
    pub group_durations: BTreeMap<AgentId, Minutes>,
    pub solo_durations: BTreeMap<AgentId, Option<Minutes>>,
    pub delta_t: Option<f64>,
}

impl GroupResult {
    /// Fills `delta_t` when the group and every member's solo journey have a timetable.
    pub fn with_prolongation(mut self) -> Self {
        self.delta_t = if self.matched && self.solo_durations.values().all(Option::is_some) {
            let g = self.group_durations.values().sum();
            let s = self.solo_durations.values().map(|d| d.expect("checked")).sum();
            relative_prolongation(g, s)
        } else {
            None
        };
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: String,
    pub n_agents: usize,
    pub direction: String,
    pub seed: u64,
    pub initial_costs: BTreeMap<AgentId, f64>,
    pub shared_costs: BTreeMap<AgentId, f64>,
    pub unreachable: Vec<AgentId>,
    pub delta_c: Option<f64>,
    pub br_rounds: usize,
    pub br_converged: bool,
    pub groups: Vec<GroupResult>,
    pub timings: PhaseTimings,
    pub error: Option<String>,
    /// Broken invariants found while re-checking the run; empty when sound.
    pub violations: Vec<String>,
}

impl ExperimentResult {
    pub fn empty(scenario: &str, n_agents: usize, direction: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            n_agents,
            direction: direction.to_string(),
            seed,
            initial_costs: BTreeMap::new(),
            shared_costs: BTreeMap::new(),
            unreachable: Vec::new(),
            delta_c: None,
            br_rounds: 0,
            br_converged: false,
            groups: Vec::new(),
            timings: PhaseTimings::default(),
            error: None,
            violations: Vec::new(),
        }
    }

    /// Duration-weighted prolongation over matched groups that have one.
    pub fn scenario_prolongation(&self) -> Option<f64> {
        let (mut g, mut s) = (0, 0);
        for gr in self.groups.iter().filter(|gr| gr.delta_t.is_some()) {
            g += gr.group_durations.values().sum::<Minutes>();
            s += gr.solo_durations.values().map(|d| d.unwrap_or(0)).sum::<Minutes>();
        }
        relative_prolongation(g, s)
    }
}

/// Fraction of groups with a timetable, per group size.
pub fn success_rates<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>) -> BTreeMap<usize, f64> {
    share_by_size(results, |g| g.matched)
}

/// Fraction of groups, per size, that got a timetable prolonging journeys by less than `threshold`.
pub fn prolongation_shares<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>, threshold: f64) -> BTreeMap<usize, f64> {
    share_by_size(results, |g| g.delta_t.is_some_and(|d| d < threshold))
}

fn share_by_size<'a>(
    results: impl IntoIterator<Item = &'a ExperimentResult>,
    hit: impl Fn(&GroupResult) -> bool,
) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in results {
        for g in &r.groups {
            let e = counts.entry(g.size).or_default();
            e.1 += 1;
            if hit(g) {
                e.0 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(size, (hits, total))| (size, hits as f64 / total as f64))
        .collect()
}

/// Mean ΔC per agent count, averaging experiments that produced one.
pub fn mean_cost_improvement<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in results {
        if let Some(dc) = r.delta_c {
            let e = acc.entry(r.n_agents).or_default();
            e.0 += dc;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(n, (sum, k))| (n, sum / k as f64)).collect()
}

/// One line of `results.csv`. Summary rows leave the group columns empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n_agents: usize,
    pub direction: String,
    pub seed: u64,
    pub delta_c: Option<f64>,
    pub group_id: Option<usize>,
    pub group_size: Option<usize>,
    pub matched: Option<bool>,
    pub timed_out: Option<bool>,
    pub delta_t: Option<f64>,
    pub t_initial_ms: f64,
    pub t_br_ms: f64,
    pub t_timetabling_ms: f64,
    pub t_total_ms: f64,
}

pub const RESULTS_HEADER: [&str; 14] = [
    "scenario",
    "n_agents",
    "direction",
    "seed",
    "delta_c",
    "group_id",
    "group_size",
    "matched",
    "timed_out",
    "delta_t",
    "t_initial_ms",
    "t_br_ms",
    "t_timetabling_ms",
    "t_total_ms",
];

/// Columns that carry wall-clock measurements and so differ between runs.
pub const TIMING_COLUMNS: [&str; 4] = ["t_initial_ms", "t_br_ms", "t_timetabling_ms", "t_total_ms"];

pub fn result_rows(result: &ExperimentResult) -> Vec<ResultRow> {
    let t = &result.timings;
    let base = ResultRow {
        scenario: result.scenario.clone(),
        n_agents: result.n_agents,
        direction: result.direction.clone(),
        seed: result.seed,
        delta_c: result.delta_c,
        group_id: None,
        group_size: None,
        matched: None,
        timed_out: None,
        delta_t: result.scenario_prolongation(),
        t_initial_ms: t.initial_ms,
        t_br_ms: t.br_ms,
        t_timetabling_ms: t.timetabling_ms,
        t_total_ms: t.total_ms,
    };
    let mut rows = vec![base.clone()];
    for g in &result.groups {
        rows.push(ResultRow {
            group_id: Some(g.group_id),
            group_size: Some(g.size),
            matched: Some(g.matched),
            timed_out: Some(g.timed_out),
            delta_t: g.delta_t,
            ..base.clone()
        });
    }
    rows
}

pub fn write_results_csv<'a>(results: impl IntoIterator<Item = &'a ExperimentResult>, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        for row in result_rows(r) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(input: impl Read) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse {
            source_name: "results.csv".into(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                source_name: "results.csv".into(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Re-checks the invariants every results table must satisfy; returns the violations found.
pub fn validate_rows(rows: &[ResultRow]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut sizes: BTreeMap<(&str, usize, &str, u64), usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        if let Some(dc) = row.delta_c {
            if !(0.0..1.0).contains(&dc) && dc.abs() > 1e-9 {
                problems.push(format!("line {line}: delta_c {dc} outside [0, 1)"));
            }
        }
        for (name, t) in [
            ("t_initial_ms", row.t_initial_ms),
            ("t_br_ms", row.t_br_ms),
            ("t_timetabling_ms", row.t_timetabling_ms),
            ("t_total_ms", row.t_total_ms),
        ] {
            if t.is_nan() || t < 0.0 {
                problems.push(format!("line {line}: {name} is negative"));
            }
        }
        if let Some(size) = row.group_size {
            if size == 0 {
                problems.push(format!("line {line}: empty group"));
            }
            let matched = row.matched.unwrap_or(false);
            if row.timed_out == Some(true) && matched {
                problems.push(format!("line {line}: group both timed out and matched"));
            }
            if row.delta_t.is_some() && !matched {
                problems.push(format!("line {line}: delta_t reported for an unmatched group"));
            }
            *sizes
                .entry((&row.scenario, row.n_agents, &row.direction, row.seed))
                .or_default() += size;
        }
    }
    for ((scenario, n, dir, seed), total) in sizes {
        if total > n {
            problems.push(format!("{scenario}/{n}/{dir}/{seed}: groups hold {total} agents but only {n} exist"));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::{merge_plans, plan_from_stops};
    use crate::planner::tests::graph_from;
    use crate::transit::StopIx;
    use proptest::prelude::*;

    fn corridor_plans(k: u32) -> Vec<Plan<f64>> {
        let g = graph_from(3, &[(0, 1, 40), (1, 2, 60)]);
        (0..k)
            .map(|a| plan_from_stops(&g, AgentId(a), &[StopIx(0), StopIx(1), StopIx(2)]).unwrap())
            .collect()
    }

    #[test]
    fn no_sharing_means_no_improvement() {
        let g = graph_from(4, &[(0, 1, 10), (2, 3, 20)]);
        let plans = vec![
            plan_from_stops::<f64>(&g, AgentId(0), &[StopIx(0), StopIx(1)]).unwrap(),
            plan_from_stops::<f64>(&g, AgentId(1), &[StopIx(2), StopIx(3)]).unwrap(),
        ];
        let joint = merge_plans(plans.clone());
        assert_eq!(cost_improvement(&plans, &joint, &SharedCostModel::default()).unwrap(), 0.0);
    }

    #[test]
    fn identical_routes() {
        let m = SharedCostModel::default();
        let two = corridor_plans(2);
        let dc = cost_improvement(&two, &merge_plans(two.clone()), &m).unwrap();
        assert!((dc - 0.4).abs() < 1e-12);
        let three = corridor_plans(3);
        let dc = cost_improvement(&three, &merge_plans(three.clone()), &m).unwrap();
        assert!((dc - (1.0 - (0.8 / 3.0 + 0.2))).abs() < 1e-12);
        assert!((dc - 0.5333).abs() < 1e-4);
    }

    #[test]
    fn zero_cost_is_an_error() {
        let joint = JointPlan::<f64>::default();
        assert!(matches!(
            cost_improvement(&[], &joint, &SharedCostModel::default()),
            Err(Error::ZeroInitialCost)
        ));
    }

    #[test]
    fn prolongation_values() {
        assert_eq!(relative_prolongation(200, 200), Some(0.0));
        assert_eq!(relative_prolongation(120 + 130, 100 + 100), Some(0.25));
        assert_eq!(relative_prolongation(10, 0), None);
        let itin = |a, d, r| Itinerary {
            agent: AgentId(a),
            legs: vec![],
            depart: d,
            arrive: r,
        };
        let group = BTreeMap::from([(AgentId(0), itin(0, 0, 120)), (AgentId(1), itin(1, 10, 140))]);
        let solo = BTreeMap::from([(AgentId(0), itin(0, 0, 100)), (AgentId(1), itin(1, 0, 100))]);
        assert_eq!(prolongation(&group, &solo), Some(0.25));
        assert_eq!(prolongation(&group, &BTreeMap::from([(AgentId(0), itin(0, 0, 100))])), None);
        assert_eq!(prolongation(&group, &group), Some(0.0));
    }

    fn result_with(groups: Vec<(usize, bool, Option<f64>)>) -> ExperimentResult {
        let mut r = ExperimentResult::empty("s", 14, "NS", 0);
        r.groups = groups
            .into_iter()
            .enumerate()
            .map(|(i, (size, matched, dt))| GroupResult {
                group_id: i,
                size,
                matched,
                timed_out: false,
                group_durations: BTreeMap::new(),
                solo_durations: BTreeMap::new(),
                delta_t: dt,
            })
            .collect();
        r
    }

    #[test]
    fn success_rate_counts() {
        let r = result_with((0..10).map(|i| (2, i < 7, None)).collect());
        let rates = success_rates([&r]);
        assert_eq!(rates[&2], 0.7);
        assert!(!rates.contains_key(&3));
        let all = result_with(vec![(1, true, None), (3, true, None)]);
        assert!(success_rates([&all]).values().all(|&v| v == 1.0));
    }

    #[test]
    fn threshold_shares() {
        let r = result_with(vec![(2, true, Some(0.1)), (2, true, Some(0.3)), (2, false, None), (3, true, Some(0.29))]);
        let shares = prolongation_shares([&r], PROLONGATION_THRESHOLD);
        assert!((shares[&2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(shares[&3], 1.0);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let mut r = result_with(vec![(2, true, Some(0.1)), (1, false, None)]);
        r.delta_c = Some(0.25);
        let mut buf = Vec::new();
        write_results_csv([&r], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scenario,n_agents,direction,seed,delta_c,group_id,group_size,matched,timed_out,delta_t,"));
        let rows = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].group_id, None);
        assert_eq!(rows[1].matched, Some(true));
        assert!(validate_rows(&rows).is_empty());

        let mut bad = rows.clone();
        bad[2].delta_t = Some(0.5);
        bad[0].delta_c = Some(-0.2);
        assert_eq!(validate_rows(&bad).len(), 2);
    }

    #[test]
    fn empty_results_file_has_header() {
        let mut buf = Vec::new();
        write_results_csv(std::iter::empty(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), RESULTS_HEADER.join(","));
    }

    proptest! {
        /// Growing one edge's label on a fixed joint plan strictly raises ΔC.
        #[test]
        fn improvement_grows_with_label(k in 1u32..8) {
            let g = graph_from(3, &[(0, 1, 40), (1, 2, 60)]);
            let m = SharedCostModel::default();
            let mut plans: Vec<Plan<f64>> = vec![plan_from_stops(&g, AgentId(0), &[StopIx(0), StopIx(1), StopIx(2)]).unwrap()];
            plans.extend((1..=k).map(|a| plan_from_stops(&g, AgentId(a), &[StopIx(1), StopIx(2)]).unwrap()));
            let before = cost_improvement(&plans, &merge_plans(plans.clone()), &m).unwrap();
            plans.push(plan_from_stops(&g, AgentId(k + 1), &[StopIx(1), StopIx(2)]).unwrap());
            // Same solo total for comparison: evaluate the grown joint on the original agents.
            let grown = merge_plans(plans.clone());
            let original = &plans[..plans.len() - 1];
            let after = cost_improvement(original, &grown, &m).unwrap();
            prop_assert!(after > before);
        }
    }
}
