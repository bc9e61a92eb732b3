//! Synthetic closed-loop testbed.
//!
//! A [`SimWorld`] maps poses to descriptors through random Fourier features,
//! so similarity decays smoothly with both distance and heading change.
//! [`teach`] drives a waypoint follower through it to record map-building
//! streams, [`episode`] closes the loop with the navigator, and [`eval`]
//! aggregates success rates over routes, seeds and map densities.

pub mod episode;
pub mod eval;
pub mod kinematics;
pub mod teach;
pub mod world;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

pub use episode::{run_episode, EpisodeConfig, EpisodeReport};
pub use eval::{episode_start, eval_suite, write_eval_csv, EvalRow, EvalSpec, SparsitySetting};
pub use kinematics::{step, KinematicParams};
pub use teach::{record_trajectory, Difficulty, RouteSpec, TeachRun};
pub use world::{SimParams, SimWorld};

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

/// Planar pose; `theta` is always wrapped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// splitmix64 finalizer, used to derive independent seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mix_all(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |acc, &p| mix64(acc ^ mix64(p)))
}
