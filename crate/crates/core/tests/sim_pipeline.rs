//! End-to-end checks that run the synthetic world through the mapper and
//! the navigator.

use toponav_core::navigator::{localize, LocalizationResult};
use toponav_core::sim::{record_trajectory, run_episode, EpisodeConfig, KinematicParams, RouteSpec, SimParams, SimWorld, TeachRun};
use toponav_core::{build_map, calibrate_thresholds, cosine_similarity, MapUpdate, ThresholdConfig, TopologicalMap};

fn world(seed: u64) -> SimWorld {
    SimWorld::new(SimParams {
        seed,
        ..SimParams::default()
    })
    .unwrap()
}

fn teach(seed: u64, route: &RouteSpec) -> (SimWorld, TeachRun) {
    let w = world(seed);
    let run = record_trajectory(&w, route, &KinematicParams::default(), 1).unwrap();
    (w, run)
}

#[test]
fn calibrated_thresholds_add_nodes_on_a_straight_run() {
    let (_, run) = teach(11, &RouteSpec::easy());
    let cfg = calibrate_thresholds(&run.frames, 15).unwrap();
    cfg.validate().unwrap();
    let out = build_map(&run.frames, cfg).unwrap();
    assert!(out.map.len() >= 2, "only {} nodes", out.map.len());
}

#[test]
fn straight_run_builds_a_chain() {
    for seed in 0..5 {
        let (_, run) = teach(seed, &RouteSpec::easy());
        let map = build_map(&run.frames, ThresholdConfig::default()).unwrap().map;
        assert!(map.len() >= 2);
        for node in &map.nodes {
            let expect: Vec<usize> = if node.id + 1 < map.len() { vec![node.id + 1] } else { vec![] };
            let got: Vec<usize> = node.arcs.iter().map(|a| a.to).collect();
            assert_eq!(got, expect, "seed {seed}");
        }
    }
}

#[test]
fn square_loop_closes_once_onto_node_zero() {
    let mut conforming = 0;
    for seed in 0..20 {
        let (_, run) = teach(seed, &RouteSpec::square_loop());
        let out = build_map(&run.frames, ThresholdConfig::default()).unwrap();
        let loops: Vec<MapUpdate> = out
            .log
            .iter()
            .map(|e| e.update)
            .filter(|u| matches!(u, MapUpdate::LoopClosed { .. }))
            .collect();
        let start = run.poses[0];
        let duplicates = out.map.nodes[1..]
            .iter()
            .filter(|n| run.pose_of_frame(n.frame_index).unwrap().distance_to(&start) < 1.0)
            .count();
        if loops.len() == 1 && matches!(loops[0], MapUpdate::LoopClosed { to: 0, .. }) && duplicates == 0 {
            conforming += 1;
        }
    }
    assert!(conforming >= 18, "{conforming}/20");
}

#[test]
fn distance_counter_matches_recount_on_sim_streams() {
    for (seed, route) in [(1, RouteSpec::easy()), (2, RouteSpec::moderate()), (3, RouteSpec::hard()), (4, RouteSpec::square_loop())] {
        let (_, run) = teach(seed, &route);
        let cfg = ThresholdConfig::default();
        let out = build_map(&run.frames, cfg.clone()).unwrap();
        let committed: u64 = out
            .log
            .iter()
            .map(|e| match e.update {
                MapUpdate::NodeAdded { weight, .. } | MapUpdate::LoopClosed { weight, .. } => weight,
                _ => 0,
            })
            .sum();
        let recount = run
            .frames
            .windows(2)
            .filter(|w| cosine_similarity(&w[1].full, &w[0].full).unwrap() < cfg.t_add_distance)
            .count() as u64;
        assert_eq!(committed + out.residual_distance, recount, "{}", route.name);
        // Without parallel-arc merges the arc weights carry the same total.
        let arc_total: u64 = out.map.nodes.iter().flat_map(|n| &n.arcs).map(|a| a.weight).sum();
        assert!(arc_total <= committed);
    }
}

#[test]
fn nodes_relocalize_to_themselves() {
    let mut hits = 0;
    let mut total = 0;
    for seed in 0..5 {
        let (w, run) = teach(seed, &RouteSpec::hard());
        let map = build_map(&run.frames, ThresholdConfig::default()).unwrap().map;
        for node in &map.nodes {
            let pose = run.pose_of_frame(node.frame_index).unwrap();
            let obs = w.full_descriptor(&pose);
            total += 1;
            if localize(&obs, &map, None, map.config.t_milestone).unwrap() == LocalizationResult::Matched(node.id, toponav_core::SimilarityScore::new(1.0)) {
                hits += 1;
            }
        }
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

#[test]
fn monotone_sparsity_over_settings_grid() {
    for seed in 0..3 {
        let (_, run) = teach(seed, &RouteSpec::hard());
        let count = |t_add: f64, interval: u32| {
            let cfg = ThresholdConfig {
                t_add_new_node: toponav_core::SimilarityScore::new(t_add),
                t_interval: interval,
                ..ThresholdConfig::default()
            };
            build_map(&run.frames, cfg).unwrap().map.len()
        };
        let adds = [0.3, 0.45, 0.6, 0.7, 0.8];
        let intervals = [1, 2, 5, 10, 20];
        for &a in &adds {
            for w in intervals.windows(2) {
                assert!(count(a, w[1]) <= count(a, w[0]), "seed {seed} add {a} interval {w:?}");
            }
        }
        for &i in &intervals {
            for w in adds.windows(2) {
                assert!(count(w[0], i) <= count(w[1], i), "seed {seed} interval {i} add {w:?}");
            }
        }
    }
}

fn dense_map(seed: u64) -> TopologicalMap {
    let (_, run) = teach(seed, &RouteSpec::hard());
    let map = build_map(&run.frames, ThresholdConfig::for_density(0.98, 1)).unwrap().map;
    assert!(map.len() >= 90, "only {} nodes", map.len());
    map
}

#[test]
fn large_sim_map_roundtrips() {
    let map = dense_map(8);
    let back = TopologicalMap::from_json(&map.to_json()).unwrap();
    assert_eq!(back, map);
    assert_eq!(back.to_json(), map.to_json());
}

#[test]
fn plans_on_sim_maps_are_shortest() {
    for seed in 0..4 {
        let (_, run) = teach(seed, &RouteSpec::square_loop());
        let map = build_map(&run.frames, ThresholdConfig::default()).unwrap().map;
        for s in 0..map.len() {
            for g in 0..map.len() {
                // Bellman-Ford style relaxation as an independent cost oracle.
                let mut dist = vec![u64::MAX; map.len()];
                dist[s] = 0;
                for _ in 0..map.len() {
                    for n in &map.nodes {
                        if dist[n.id] == u64::MAX {
                            continue;
                        }
                        for a in &n.arcs {
                            dist[a.to] = dist[a.to].min(dist[n.id] + a.weight);
                        }
                    }
                }
                match map.shortest_path(s, g) {
                    Ok(p) => {
                        assert_eq!(p.cost, dist[g]);
                        assert_eq!(map.path_cost(&p.nodes), Some(p.cost));
                    }
                    Err(_) => assert_eq!(dist[g], u64::MAX),
                }
            }
        }
    }
}

#[test]
fn goal_reached_implies_milestone_similarity() {
    for seed in 0..6 {
        let (w, run) = teach(seed, &RouteSpec::moderate());
        let map = build_map(&run.frames, ThresholdConfig::default()).unwrap().map;
        let goal = map.len() - 1;
        let goal_pose = run.pose_of_frame(map.nodes[goal].frame_index).unwrap();
        let cfg = EpisodeConfig {
            budget: 4 * run.steps,
            ..EpisodeConfig::default()
        };
        let rep = run_episode(&w, &map, run.poses[0], goal, goal_pose, &cfg).unwrap();
        let last = rep.log.last().unwrap();
        if rep.goal_reached {
            assert_eq!(last.event, "goal_reached");
            assert!(rep.goal_similarity > map.config.t_milestone.value());
            assert!(last.s_ref.unwrap().value() > map.config.t_milestone.value());
        }
        assert!(rep.steps <= cfg.budget);
    }
}
