use serde::{Deserialize, Serialize};

use super::Pose;
use crate::error::{Error, Result};
use crate::navigator::Action;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicParams {
    /// Metres per forward step.
    pub step_length: f64,
    /// Radians per in-place turn.
    pub turn_angle: f64,
    /// Share of `turn_angle` applied by the combined forward-turn actions.
    pub combo_turn_fraction: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self {
            step_length: 0.25,
            turn_angle: 15f64.to_radians(),
            combo_turn_fraction: 0.5,
        }
    }
}

impl KinematicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_length > 0.0) || !self.step_length.is_finite() {
            return Err(Error::Config("step_length must be positive".into()));
        }
        if !(self.turn_angle > 0.0 && self.turn_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("turn_angle must lie in (0, pi/2)".into()));
        }
        if !(self.combo_turn_fraction > 0.0 && self.combo_turn_fraction <= 1.0) {
            return Err(Error::Config("combo_turn_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// In-place turns needed to sweep a full circle.
    pub fn turns_per_revolution(&self) -> u32 {
        (std::f64::consts::TAU / self.turn_angle).ceil() as u32
    }
}

/// Applies one discrete action. Combined actions translate along the old
/// heading first, then rotate.
pub fn step(pose: Pose, action: Action, kin: &KinematicParams) -> Pose {
    let advance = |p: Pose| {
        let (s, c) = p.theta.sin_cos();
        Pose {
            x: p.x + kin.step_length * c,
            y: p.y + kin.step_length * s,
            theta: p.theta,
        }
    };
    let combo = kin.turn_angle * kin.combo_turn_fraction;
    let (moved, dtheta) = match action {
        Action::Forward => (advance(pose), 0.0),
        Action::Left | Action::RotateSearch => (pose, kin.turn_angle),
        Action::Right => (pose, -kin.turn_angle),
        Action::ForwardLeft => (advance(pose), combo),
        Action::ForwardRight => (advance(pose), -combo),
        Action::NoAction => return pose,
    };
    Pose::new(moved.x, moved.y, moved.theta + dtheta)
}
