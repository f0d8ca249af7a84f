mod common;

use std::collections::BTreeMap;

use common::{oracle_total_duration, random_sched_instance, schedule_problems};
use journey_sharing::best_response::merge_plans;
use journey_sharing::groups::{identify_groups, relevant_timetable, split_into_parts};
use journey_sharing::planner::AgentId;
use journey_sharing::scheduler::{schedule_group, Unscheduled};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn schedule_group_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut matched, mut infeasible) = (0, 0);
    for case in 0..400 {
        let inst = random_sched_instance(&mut rng, 20);
        let joint = merge_plans(inst.plans());
        let groups = identify_groups(&joint).unwrap();
        assert_eq!(groups.len(), 1, "case {case}");
        let parts = split_into_parts(&groups[0]);
        assert!(parts.len() <= 3, "case {case}: {} parts", parts.len());
        let tt = relevant_timetable(0, &parts, &inst.network);
        assert!(tt.connections.len() <= 20);
        let paths: BTreeMap<AgentId, _> = inst.paths.iter().cloned().enumerate().map(|(a, p)| (AgentId(a as u32), p)).collect();

        let expected = oracle_total_duration(&parts, &paths, &inst.network);
        match schedule_group(&parts, &tt, 60.0) {
            Ok(s) => {
                assert_eq!(Some(s.total_duration()), expected, "case {case}");
                assert_eq!(schedule_problems(&s, &parts, &paths, &inst.network), None, "case {case}");
                matched += 1;
            }
            Err(Unscheduled::Infeasible(_)) => {
                assert_eq!(expected, None, "case {case}");
                infeasible += 1;
            }
            Err(Unscheduled::TimedOut) => panic!("case {case} timed out"),
        }
    }
    // Both outcomes must actually be exercised.
    assert!(matched > 50 && infeasible > 10, "{matched} matched, {infeasible} infeasible");
}

#[test]
fn zero_time_limit_always_times_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_sched_instance(&mut rng, 10);
    let joint = merge_plans(inst.plans());
    let g = &identify_groups(&joint).unwrap()[0];
    let parts = split_into_parts(g);
    let tt = relevant_timetable(0, &parts, &inst.network);
    assert_eq!(schedule_group(&parts, &tt, 0.0).unwrap_err(), Unscheduled::TimedOut);
}
