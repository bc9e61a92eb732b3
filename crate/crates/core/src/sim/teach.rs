//! Teach pass: a waypoint follower that records the descriptor stream a
//! map is later built from.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kinematics::{step, KinematicParams};
use super::world::SimWorld;
use super::{wrap_angle, Pose};
use crate::descriptor::ObservationDescriptors;
use crate::error::{Error, Result};
use crate::navigator::Action;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub waypoints: Vec<[f64; 2]>,
    pub name: String,
    pub difficulty: Difficulty,
}

impl RouteSpec {
    pub fn new(name: &str, difficulty: Difficulty, waypoints: &[[f64; 2]]) -> Self {
        Self {
            waypoints: waypoints.to_vec(),
            name: name.to_string(),
            difficulty,
        }
    }

    /// Straight 10 m corridor.
    pub fn easy() -> Self {
        Self::new("easy", Difficulty::Easy, &[[0.0, 0.0], [10.0, 0.0]])
    }

    /// 20 m with two turns.
    pub fn moderate() -> Self {
        Self::new("moderate", Difficulty::Moderate, &[[0.0, 0.0], [8.0, 0.0], [8.0, 6.0], [14.0, 6.0]])
    }

    /// 35 m with four turns.
    pub fn hard() -> Self {
        Self::new(
            "hard",
            Difficulty::Hard,
            &[[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [15.0, 8.0], [15.0, 1.0], [20.0, 1.0]],
        )
    }

    /// 8 m square driven counterclockwise from the middle of one edge,
    /// finishing 1.5 m past the start.
    pub fn square_loop() -> Self {
        Self::new(
            "square_loop",
            Difficulty::Easy,
            &[[4.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0], [0.0, 0.0], [5.5, 0.0]],
        )
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config(format!("route {:?} needs at least two waypoints", self.name)));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("route {:?} has a non-finite waypoint", self.name)));
        }
        let [x0, y0] = self.waypoints[0];
        if self.waypoints[1..].iter().all(|&[x, y]| x == x0 && y == y0) {
            return Err(Error::Config(format!("route {:?} never leaves its start", self.name)));
        }
        Ok(())
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::from_json(e, 0))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Start pose: first waypoint, facing the first waypoint that differs from it.
    pub fn start_pose(&self) -> Pose {
        let [x0, y0] = self.waypoints[0];
        let [x1, y1] = self.waypoints[1..]
            .iter()
            .copied()
            .find(|&[x, y]| x != x0 || y != y0)
            .unwrap_or([x0 + 1.0, y0]);
        Pose::new(x0, y0, (y1 - y0).atan2(x1 - x0))
    }
}

/// A recorded teach pass.
#[derive(Clone, Debug)]
pub struct TeachRun {
    pub frames: Vec<ObservationDescriptors>,
    /// Ground-truth pose of each frame.
    pub poses: Vec<Pose>,
    /// Motion steps driven, including ones between emitted frames.
    pub steps: usize,
}

impl TeachRun {
    /// Pose at which `frame_index` was recorded.
    pub fn pose_of_frame(&self, frame_index: u64) -> Option<Pose> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| self.poses[i])
    }
}

/// Step budget generous enough for any follower run over `route`.
pub fn follower_budget(route: &RouteSpec, kin: &KinematicParams) -> usize {
    let forward = (route.length() / kin.step_length).ceil() as usize;
    let turning = route.waypoints.len() * ((PI / kin.turn_angle).ceil() as usize + 2);
    2 * forward + turning + 16
}

/// Drives from waypoint to waypoint, turning in place whenever the heading
/// error reaches `turn_angle`. Frame 0 is the start pose; afterwards a frame
/// is emitted every `frame_stride` steps, indexed by step count.
pub fn record_trajectory(world: &SimWorld, route: &RouteSpec, kin: &KinematicParams, frame_stride: usize) -> Result<TeachRun> {
    route.validate()?;
    kin.validate()?;
    if frame_stride == 0 {
        return Err(Error::Config("frame_stride must be at least 1".into()));
    }
    let budget = follower_budget(route, kin);
    let mut pose = route.start_pose();
    let mut frames = vec![world.observe(&pose, 0)];
    let mut poses = vec![pose];
    let mut steps = 0usize;
    for (index, &[tx, ty]) in route.waypoints.iter().enumerate().skip(1) {
        loop {
            let (dx, dy) = (tx - pose.x, ty - pose.y);
            if dx.hypot(dy) < kin.step_length {
                break;
            }
            if steps >= budget {
                return Err(Error::UnreachableWaypoint { index, budget });
            }
            let err = wrap_angle(dy.atan2(dx) - pose.theta);
            let action = if err.abs() < kin.turn_angle {
                Action::Forward
            } else if err > 0.0 {
                Action::Left
            } else {
                Action::Right
            };
            pose = step(pose, action, kin);
            steps += 1;
            if steps.is_multiple_of(frame_stride) {
                frames.push(world.observe(&pose, steps as u64));
                poses.push(pose);
            }
        }
    }
    Ok(TeachRun { frames, poses, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimParams;

    fn world() -> SimWorld {
        SimWorld::new(SimParams {
            dim: 16,
            ..SimParams::default()
        })
        .unwrap()
    }

    #[test]
    fn straight_line_run() {
        let route = RouteSpec::new("line", Difficulty::Easy, &[[0.0, 0.0], [5.0, 0.0]]);
        let run = record_trajectory(&world(), &route, &KinematicParams::default(), 1).unwrap();
        assert!((19..=21).contains(&run.frames.len()), "{}", run.frames.len());
        for w in run.poses.windows(2) {
            assert!(w[1].x > w[0].x);
            assert_eq!(w[1].theta, 0.0);
        }
    }

    #[test]
    fn square_loop_closes() {
        let route = RouteSpec::new(
            "square",
            Difficulty::Easy,
            &[[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0], [0.0, 0.0]],
        );
        let k = KinematicParams::default();
        let run = record_trajectory(&world(), &route, &k, 1).unwrap();
        let end = run.poses.last().unwrap();
        assert!(end.distance_to(&Pose::new(0.0, 0.0, 0.0)) < k.step_length);
    }

    #[test]
    fn stride_thins_frames() {
        let route = RouteSpec::new("long", Difficulty::Easy, &[[0.0, 0.0], [75.0, 0.0]]);
        let run = record_trajectory(&world(), &route, &KinematicParams::default(), 30).unwrap();
        assert_eq!(run.steps, 300);
        assert_eq!(run.frames.len(), 11);
        for w in run.frames.windows(2) {
            assert_eq!(w[1].frame_index - w[0].frame_index, 30);
        }
        assert_eq!(run.pose_of_frame(60), Some(run.poses[2]));
        assert_eq!(run.pose_of_frame(61), None);
    }

    #[test]
    fn bad_routes_rejected() {
        let k = KinematicParams::default();
        let one = RouteSpec::new("one", Difficulty::Easy, &[[0.0, 0.0]]);
        assert!(record_trajectory(&world(), &one, &k, 1).is_err());
        assert!(record_trajectory(&world(), &RouteSpec::easy(), &k, 0).is_err());
    }

    #[test]
    fn builtin_route_lengths() {
        assert_eq!(RouteSpec::easy().length(), 10.0);
        assert_eq!(RouteSpec::moderate().length(), 20.0);
        assert_eq!(RouteSpec::hard().length(), 35.0);
    }
}
