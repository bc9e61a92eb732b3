use std::io::Write;

use serde::{Deserialize, Serialize};

use super::kinematics::{step, KinematicParams};
use super::world::SimWorld;
use super::Pose;
use crate::descriptor::{cosine_similarity, ThresholdConfig};
use crate::error::Result;
use crate::graph::{NodeId, TopologicalMap};
use crate::navigator::{Action, EpisodeLogEntry, Phase, Session, StepEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub thresholds: ThresholdConfig,
    pub kinematics: KinematicParams,
    /// Maximum navigator steps, start localization included.
    pub budget: usize,
    /// Metres from the goal's teach pose that still count as arrival.
    pub goal_radius: f64,
    /// Rotations allowed while localizing the start; 0 means one full turn.
    pub start_attempts: u32,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            kinematics: KinematicParams::default(),
            budget: 600,
            goal_radius: 1.0,
            start_attempts: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeReport {
    pub success: bool,
    pub goal_reached: bool,
    pub steps: usize,
    pub relocalizations: u32,
    /// Distance from the final pose to the goal's teach pose, in metres.
    pub final_pose_error: f64,
    /// Similarity of the final view to the goal node.
    pub goal_similarity: f64,
    pub action_trace: Vec<Action>,
    /// Start pose followed by the pose after every step.
    pub pose_trace: Vec<Pose>,
    #[serde(skip)]
    pub log: Vec<EpisodeLogEntry>,
}

impl EpisodeReport {
    pub fn write_pose_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "x", "y", "theta"]).map_err(csv_err)?;
        for (i, p) in self.pose_trace.iter().enumerate() {
            w.serialize((i, p.x, p.y, p.theta)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Config(format!("csv: {other:?}")),
    }
}

/// Closed loop: observe, step the navigator, move, until the goal is
/// declared, navigation fails, or the budget runs out.
pub fn run_episode(
    world: &SimWorld,
    map: &TopologicalMap,
    start: Pose,
    goal_node: NodeId,
    goal_pose: Pose,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport> {
    let goal_desc = map.descriptor(goal_node)?;
    let attempts = if cfg.start_attempts == 0 {
        cfg.kinematics.turns_per_revolution()
    } else {
        cfg.start_attempts
    };
    let mut session = Session::with_goal_node(map, goal_node, cfg.thresholds.clone(), attempts);
    let mut pose = start;
    let mut pose_trace = vec![pose];
    let mut action_trace = Vec::new();
    let mut log = Vec::new();
    let mut goal_reached = false;
    let mut last_obs = world.full_descriptor(&pose);
    while session.steps() < cfg.budget {
        let obs = world.observe(&pose, session.steps() as u64);
        let out = session.step(&obs)?;
        log.push(session.log_entry(&out));
        last_obs = obs.full;
        action_trace.push(out.action);
        pose = step(pose, out.action, &cfg.kinematics);
        pose_trace.push(pose);
        if out.event == StepEvent::GoalReached {
            goal_reached = true;
        }
        if matches!(session.phase(), Phase::Reached | Phase::Failed) {
            break;
        }
    }
    let final_pose_error = pose.distance_to(&goal_pose);
    Ok(EpisodeReport {
        success: goal_reached && final_pose_error <= cfg.goal_radius,
        goal_reached,
        steps: session.steps(),
        relocalizations: session.relocalizations(),
        final_pose_error,
        goal_similarity: cosine_similarity(&last_obs, goal_desc)?.value(),
        action_trace,
        pose_trace,
        log,
    })
}
