mod common;

use std::sync::Arc;

use frontier_nav::collect::{explore_episode, CollectParams, EndStatus, Strategy};
use frontier_nav::eval::{
    compare_results, evaluate_suite, memory_ablation, replay, replay_collected, run_episode, EvalOptions, Policy,
};
use frontier_nav::percept::NoiseParams;
use frontier_nav::scene::{generate_episodes, generate_scene, EpisodeGenParams, EpisodeSpec, SceneGenParams};

use common::{episode, object, scene};

fn suite(scenes: u64, per_scene: usize, goals: usize) -> Vec<EpisodeSpec> {
    let p = EpisodeGenParams {
        count: per_scene,
        goals_per_episode: goals,
        ..EpisodeGenParams::default()
    };
    (0..scenes)
        .flat_map(|s| {
            let sc = Arc::new(generate_scene(&SceneGenParams::default(), 200 + s).unwrap());
            generate_episodes(&sc, &p, s).unwrap()
        })
        .collect()
}

#[test]
fn nearby_visible_goal_is_walked_optimally() {
    // target footprint spans cells x 11..=12; the start cell is x = 2
    let ep = episode(scene("near", [6.0, 4.0], vec![], vec![object(1, [3.0, 2.0], 0, false)]), [0.625, 2.125], 1);
    let mut opts = EvalOptions::default();
    opts.runtime.noise = NoiseParams::zero();
    opts.runtime.decide.approach_radius = 1.0;
    let r = run_episode(&ep, Policy::Heuristic, &opts, 1);
    let g = &r.goals[0];
    assert!(g.success);
    assert!((g.geodesic_length - 1.25).abs() < 1e-12);
    assert!((g.agent_path_length - g.geodesic_length).abs() < 1e-12);
    assert_eq!(g.decisions, 1);
}

#[test]
fn zero_decisions_never_succeed() {
    let eps = suite(2, 5, 1);
    let opts = EvalOptions {
        decision_budget: Some(0),
        ..EvalOptions::default()
    };
    for r in evaluate_suite(&eps, Policy::Heuristic, &opts, 1) {
        assert!(!r.success);
        assert!(r.goals.iter().all(|g| g.decisions == 0 && g.agent_path_length == 0.0));
    }
}

#[test]
fn collected_runs_replay_to_the_same_outcome() {
    let eps = suite(4, 6, 2);
    let cp = CollectParams::default();
    let opts = EvalOptions {
        runtime: cp.runtime.clone(),
        ..EvalOptions::default()
    };
    let mut successes = 0;
    for (i, ep) in eps.iter().enumerate() {
        let out = explore_episode(ep, Strategy::Optimal, &cp, i as u64);
        let r = replay_collected(ep, &out, &opts);
        for (k, g) in r.goals.iter().enumerate() {
            let collected = out.goal_statuses.get(k).copied();
            assert_eq!(g.success, collected == Some(EndStatus::Success), "{} goal {k}: {collected:?}", ep.id());
            successes += usize::from(g.success);
        }
    }
    assert!(successes > 0);
}

#[test]
fn successful_paths_are_not_shorter_than_geodesic() {
    let eps = suite(4, 8, 1);
    let results = evaluate_suite(&eps, Policy::Heuristic, &EvalOptions::default(), 2);
    let mut n = 0;
    for g in results.iter().flat_map(|r| &r.goals).filter(|g| g.success) {
        assert!(g.agent_path_length >= g.geodesic_length - 0.25, "p {} < l {}", g.agent_path_length, g.geodesic_length);
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn evaluation_and_replay_are_deterministic() {
    let eps = suite(2, 4, 2);
    let opts = EvalOptions::default();
    let a = evaluate_suite(&eps, Policy::Heuristic, &opts, 3);
    assert_eq!(a, evaluate_suite(&eps, Policy::Heuristic, &opts, 3));
    for (ep, r) in eps.iter().zip(&a) {
        assert_eq!(&replay(ep, r, &opts), r);
    }
}

#[test]
fn identical_arms_compare_equal() {
    let eps = suite(3, 5, 1);
    let r = evaluate_suite(&eps, Policy::Heuristic, &EvalOptions::default(), 4);
    let c = compare_results(("a", &r), ("b", &r), &[0, 1, 3, 6], 5, "h").unwrap();
    for row in &c.rows {
        assert_eq!(row.a_sr, row.b_sr);
        assert_eq!(row.a_spl, row.b_spl);
        assert_eq!(row.a_sr_ci, row.b_sr_ci);
    }
    let zero = c.row(0).unwrap();
    assert_eq!((zero.a_sr, zero.a_spl), (0.0, 0.0));
    assert!(compare_results(("a", &r), ("b", &r[1..]), &[1], 5, "h").is_err());
}

#[test]
fn single_goal_ablation_arms_match() {
    let eps = suite(2, 5, 1);
    let rep = memory_ablation(&eps, Policy::Heuristic, &EvalOptions::default(), 6, "h");
    assert_eq!(rep.overall_with_memory, rep.overall_without_memory);
    for row in &rep.rows {
        assert_eq!(row.sr_with_memory, row.sr_without_memory);
    }
}
