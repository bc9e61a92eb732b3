use std::path::Path;

use serde::{Deserialize, Serialize};
use toponav_core::sim::{KinematicParams, SimParams, SparsitySetting};
use toponav_core::{Error, Result, SimilarityScore, ThresholdConfig};

/// Everything a run can be configured with. Loaded from `--config`, then
/// overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub thresholds: ThresholdConfig,
    pub kinematics: KinematicParams,
    pub sim: SimParams,
    /// Base seed; evaluation uses `seed..seed + seeds`.
    pub seed: u64,
    pub seeds: u64,
    pub episodes: usize,
    pub frame_stride: usize,
    pub start_perturbation: f64,
    pub goal_radius: f64,
    pub budget_factor: f64,
    pub settings: Vec<SparsitySetting>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            kinematics: KinematicParams::default(),
            sim: SimParams::default(),
            seed: 0,
            seeds: 20,
            episodes: 1,
            frame_stride: 1,
            start_perturbation: 0.3,
            goal_radius: 1.0,
            budget_factor: 4.0,
            settings: vec![SparsitySetting::sparse()],
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.kinematics.validate()?;
        self.sim.validate()?;
        for s in &self.settings {
            s.thresholds.validate()?;
        }
        if self.frame_stride == 0 {
            return Err(Error::Config("frame_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Writes this config next to `artifact` as `<artifact>.config.json`.
    pub fn write_sidecar(&self, artifact: &Path) -> Result<()> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".config.json");
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        std::fs::write(name, text)?;
        Ok(())
    }
}

/// Threshold overrides shared by every subcommand that builds or navigates.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ThresholdArgs {
    #[arg(long = "t-add", value_name = "SIM")]
    pub t_add: Option<f64>,
    #[arg(long = "t-dist", value_name = "SIM")]
    pub t_dist: Option<f64>,
    #[arg(long = "t-loop", value_name = "SIM")]
    pub t_loop: Option<f64>,
    #[arg(long = "t-interval", value_name = "FRAMES")]
    pub t_interval: Option<u32>,
    #[arg(long = "t-milestone", value_name = "SIM")]
    pub t_milestone: Option<f64>,
    #[arg(long = "t-change", value_name = "SIM")]
    pub t_change: Option<f64>,
    #[arg(long = "t-control", value_name = "SIM")]
    pub t_control: Option<f64>,
    #[arg(long = "window-behind", value_name = "NODES")]
    pub window_behind: Option<usize>,
    #[arg(long = "window-ahead", value_name = "NODES")]
    pub window_ahead: Option<usize>,
}

impl ThresholdArgs {
    /// Applies the flags that were given on top of `cfg`.
    pub fn apply(&self, cfg: &mut ThresholdConfig) {
        let set = |slot: &mut SimilarityScore, v: Option<f64>| {
            if let Some(v) = v {
                *slot = SimilarityScore::new(v);
            }
        };
        set(&mut cfg.t_add_new_node, self.t_add);
        set(&mut cfg.t_add_distance, self.t_dist);
        set(&mut cfg.t_loop_closure, self.t_loop);
        set(&mut cfg.t_milestone, self.t_milestone);
        set(&mut cfg.t_change_node, self.t_change);
        set(&mut cfg.t_limited_control, self.t_control);
        if let Some(v) = self.t_interval {
            cfg.t_interval = v;
        }
        if let Some(v) = self.window_behind {
            cfg.match_window_behind = v;
        }
        if let Some(v) = self.window_ahead {
            cfg.match_window_ahead = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let mut cfg = ThresholdConfig {
            t_interval: 9,
            ..ThresholdConfig::default()
        };
        let args = ThresholdArgs {
            t_add: Some(0.4),
            window_ahead: Some(4),
            ..ThresholdArgs::default()
        };
        args.apply(&mut cfg);
        assert_eq!(cfg.t_add_new_node.value(), 0.4);
        assert_eq!(cfg.match_window_ahead, 4);
        assert_eq!(cfg.t_interval, 9);
    }

    #[test]
    fn partial_config_file_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "thresholds": {"t_interval": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.thresholds.t_interval, 3);
        assert_eq!(cfg.thresholds.t_add_new_node, ThresholdConfig::default().t_add_new_node);
        assert_eq!(cfg.sim, SimParams::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }
}
