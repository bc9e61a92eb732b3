//! Fixtures shared by the criterion benches.

use toponav_core::sim::{record_trajectory, KinematicParams, RouteSpec, SimParams, SimWorld, TeachRun};
use toponav_core::{build_map, GlobalDescriptor, ThresholdConfig, TopologicalMap};

pub fn world(seed: u64) -> SimWorld {
    SimWorld::new(SimParams {
        seed,
        ..SimParams::default()
    })
    .expect("default sim parameters are valid")
}

pub fn teach(seed: u64, route: &RouteSpec) -> (SimWorld, TeachRun) {
    let w = world(seed);
    let run = record_trajectory(&w, route, &KinematicParams::default(), 1).expect("built-in routes are drivable");
    (w, run)
}

pub fn hard_map(seed: u64) -> TopologicalMap {
    let (_, run) = teach(seed, &RouteSpec::hard());
    build_map(&run.frames, ThresholdConfig::default()).expect("teach streams build").map
}

/// A chain map of `n` random nodes with a few shortcut arcs.
pub fn chain_map(n: usize, dim: usize) -> TopologicalMap {
    let w = SimWorld::new(SimParams {
        dim,
        ..SimParams::default()
    })
    .expect("valid dim");
    let mut m = TopologicalMap::new(dim, ThresholdConfig::default());
    for i in 0..n {
        let p = toponav_core::Pose::new(i as f64 * 0.7, (i % 7) as f64, 0.0);
        m.add_node(i as u64, w.full_descriptor(&p)).expect("dims agree");
    }
    for i in 1..n {
        m.add_arc(i - 1, i, 3).expect("ids exist");
        if i >= 5 && i % 5 == 0 {
            m.add_arc(i - 5, i, 13).expect("ids exist");
        }
    }
    m
}

pub fn descriptors(n: usize, dim: usize) -> Vec<GlobalDescriptor> {
    let w = SimWorld::new(SimParams {
        dim,
        ..SimParams::default()
    })
    .expect("valid dim");
    (0..n)
        .map(|i| w.full_descriptor(&toponav_core::Pose::new(i as f64 * 0.3, 0.0, i as f64 * 0.1)))
        .collect()
}
