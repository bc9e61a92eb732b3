//! Goal-directed navigation over a finished map.
//!
//! A [`NavigatorState`] follows a planned node sequence, switching reference
//! nodes as similarity drops, relocalizing inside a window around its plan
//! position when confidence is lost, and steering with a three-segment
//! comparison filtered through a two-cycle agreement buffer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::descriptor::{best_match_by, cosine_similarity, GlobalDescriptor, ObservationDescriptors, SimilarityScore, ThresholdConfig};
use crate::error::{Error, Result};
use crate::graph::{NodeId, TopologicalMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    Left,
    Right,
    ForwardLeft,
    ForwardRight,
    RotateSearch,
    NoAction,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Forward,
        Action::Left,
        Action::Right,
        Action::ForwardLeft,
        Action::ForwardRight,
        Action::RotateSearch,
        Action::NoAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::Left => "left",
            Action::Right => "right",
            Action::ForwardLeft => "forward_left",
            Action::ForwardRight => "forward_right",
            Action::RotateSearch => "rotate_search",
            Action::NoAction => "no_action",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combines the raw decisions of two consecutive cycles into one action.
pub fn arbitrate(first: Action, second: Action) -> Action {
    use Action::*;
    match (first, second) {
        (a, b) if a == b => a,
        (RotateSearch, _) | (_, RotateSearch) => NoAction,
        (Forward, Left) | (Left, Forward) => ForwardLeft,
        (Forward, Right) | (Right, Forward) => ForwardRight,
        _ => NoAction,
    }
}

/// Raw steering decision from the left/middle/right similarities to `target`.
///
/// Returns the winning segment's action and the three scores. Ties prefer
/// the middle, then the left.
pub fn segment_choice(
    obs: &ObservationDescriptors,
    target: &GlobalDescriptor,
    t_limited_control: SimilarityScore,
) -> Result<(Action, [SimilarityScore; 3])> {
    let seg = obs.segments()?;
    let s_l = cosine_similarity(&seg.left, target)?;
    let s_m = cosine_similarity(&seg.middle, target)?;
    let s_r = cosine_similarity(&seg.right, target)?;
    let (best, action) = if s_m >= s_l && s_m >= s_r {
        (s_m, Action::Forward)
    } else if s_l >= s_r {
        (s_l, Action::Left)
    } else {
        (s_r, Action::Right)
    };
    let action = if best <= t_limited_control {
        Action::RotateSearch
    } else {
        action
    };
    Ok((action, [s_l, s_m, s_r]))
}

/// Two-cycle buffer: the first call stores its decision, the second acts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TwoCycle {
    pending: Option<Action>,
}

impl TwoCycle {
    pub fn parity(&self) -> u8 {
        u8::from(self.pending.is_some())
    }

    pub fn pending(&self) -> Option<Action> {
        self.pending
    }

    pub fn push(&mut self, raw: Action) -> Action {
        match self.pending.take() {
            None => {
                self.pending = Some(raw);
                Action::NoAction
            }
            Some(first) => arbitrate(first, raw),
        }
    }

    pub fn clear(&mut self) {
        self.pending = None;
    }
}

/// Segment choice against `target` pushed through the two-cycle buffer.
pub fn select_action(
    obs: &ObservationDescriptors,
    target: &GlobalDescriptor,
    t_limited_control: SimilarityScore,
    cycle: &mut TwoCycle,
) -> Result<Action> {
    let (raw, _) = segment_choice(obs, target, t_limited_control)?;
    Ok(cycle.push(raw))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LocalizationResult {
    Matched(NodeId, SimilarityScore),
    BelowMilestone(NodeId, SimilarityScore),
}

impl LocalizationResult {
    pub fn node(&self) -> NodeId {
        match *self {
            LocalizationResult::Matched(id, _) | LocalizationResult::BelowMilestone(id, _) => id,
        }
    }

    pub fn score(&self) -> SimilarityScore {
        match *self {
            LocalizationResult::Matched(_, s) | LocalizationResult::BelowMilestone(_, s) => s,
        }
    }
}

/// Best node for `obs`, optionally restricted to `restrict`.
pub fn localize(
    obs: &GlobalDescriptor,
    map: &TopologicalMap,
    restrict: Option<&[NodeId]>,
    t_milestone: SimilarityScore,
) -> Result<LocalizationResult> {
    let (id, score) = match restrict {
        None => best_match_by(obs, map.descriptors())?,
        Some(ids) => {
            let pairs = ids
                .iter()
                .map(|&id| map.descriptor(id).map(|d| (id, d)))
                .collect::<Result<Vec<_>>>()?;
            best_match_by(obs, pairs)?
        }
    };
    Ok(if score > t_milestone {
        LocalizationResult::Matched(id, score)
    } else {
        LocalizationResult::BelowMilestone(id, score)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    LocalizingStart,
    Navigating,
    Relocalizing,
    Reached,
    Failed,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::LocalizingStart => "localizing_start",
            Phase::Navigating => "navigating",
            Phase::Relocalizing => "relocalizing",
            Phase::Reached => "reached",
            Phase::Failed => "failed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepEvent {
    None,
    NodeSwitched(usize),
    GoalReached,
    RelocalizationTriggered,
    LocalizationFailed,
}

impl StepEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            StepEvent::None => "none",
            StepEvent::NodeSwitched(_) => "node_switched",
            StepEvent::GoalReached => "goal_reached",
            StepEvent::RelocalizationTriggered => "relocalization_triggered",
            StepEvent::LocalizationFailed => "localization_failed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub action: Action,
    pub event: StepEvent,
    pub seq_pos: usize,
    pub s_ref: SimilarityScore,
}

pub enum StartOutcome<'m> {
    Ready(NavigatorState<'m>),
    /// The current view matched nothing; rotate and try again.
    NeedRotation(LocalizationResult),
}

/// Localizes the goal and the current view over the whole map and plans
/// between them.
pub fn start_navigation<'m>(
    map: &'m TopologicalMap,
    goal: &GlobalDescriptor,
    initial_obs: &GlobalDescriptor,
    config: &ThresholdConfig,
) -> Result<StartOutcome<'m>> {
    let goal_node = localize_goal(map, goal, config)?;
    start_from(map, goal_node, initial_obs, config)
}

fn localize_goal(map: &TopologicalMap, goal: &GlobalDescriptor, config: &ThresholdConfig) -> Result<NodeId> {
    if map.is_empty() {
        return Err(Error::InvalidMap("map has no nodes".into()));
    }
    match localize(goal, map, None, config.t_milestone)? {
        LocalizationResult::Matched(id, _) => Ok(id),
        LocalizationResult::BelowMilestone(best, score) => Err(Error::GoalNotInMap {
            best,
            score: score.value(),
        }),
    }
}

fn start_from<'m>(
    map: &'m TopologicalMap,
    goal_node: NodeId,
    initial_obs: &GlobalDescriptor,
    config: &ThresholdConfig,
) -> Result<StartOutcome<'m>> {
    match localize(initial_obs, map, None, config.t_milestone)? {
        LocalizationResult::Matched(current, _) => {
            let path = map.shortest_path(current, goal_node)?;
            Ok(StartOutcome::Ready(NavigatorState::new(map, path.nodes, config.clone())))
        }
        below => Ok(StartOutcome::NeedRotation(below)),
    }
}

#[derive(Clone, Debug)]
pub struct NavigatorState<'m> {
    map: &'m TopologicalMap,
    config: ThresholdConfig,
    plan: Vec<NodeId>,
    seq_pos: usize,
    phase: Phase,
    cycle: TwoCycle,
    low_confidence_steps: u32,
    failed_relocalizations: u32,
    relocalization_count: u32,
    /// Nodes whose descriptors the last step compared against.
    touched: Vec<NodeId>,
    /// Candidate set of the last relocalization attempt.
    last_window: Vec<NodeId>,
}

impl<'m> NavigatorState<'m> {
    /// State positioned at the start of `plan`. `plan` must be non-empty.
    pub fn new(map: &'m TopologicalMap, plan: Vec<NodeId>, config: ThresholdConfig) -> Self {
        assert!(!plan.is_empty(), "a plan holds at least the start node");
        Self {
            map,
            config,
            plan,
            seq_pos: 0,
            phase: Phase::Navigating,
            cycle: TwoCycle::default(),
            low_confidence_steps: 0,
            failed_relocalizations: 0,
            relocalization_count: 0,
            touched: Vec::new(),
            last_window: Vec::new(),
        }
    }

    pub fn plan(&self) -> &[NodeId] {
        &self.plan
    }

    pub fn seq_pos(&self) -> usize {
        self.seq_pos
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn relocalization_count(&self) -> u32 {
        self.relocalization_count
    }

    pub fn low_confidence_steps(&self) -> u32 {
        self.low_confidence_steps
    }

    pub fn cycle(&self) -> &TwoCycle {
        &self.cycle
    }

    pub fn touched_nodes(&self) -> &[NodeId] {
        &self.touched
    }

    pub fn last_relocalization_window(&self) -> &[NodeId] {
        &self.last_window
    }

    pub fn reference_node(&self) -> NodeId {
        self.plan[self.seq_pos]
    }

    fn last(&self) -> usize {
        self.plan.len() - 1
    }

    fn sim_to_plan(&mut self, obs: &GlobalDescriptor, pos: usize) -> Result<SimilarityScore> {
        let id = self.plan[pos];
        self.touched.push(id);
        cosine_similarity(obs, self.map.descriptor(id)?)
    }

    fn outcome(&self, action: Action, event: StepEvent, s_ref: SimilarityScore) -> StepOutcome {
        StepOutcome {
            action,
            event,
            seq_pos: self.seq_pos,
            s_ref,
        }
    }

    fn reach(&mut self, s_ref: SimilarityScore) -> StepOutcome {
        self.phase = Phase::Reached;
        self.cycle.clear();
        self.outcome(Action::NoAction, StepEvent::GoalReached, s_ref)
    }

    pub fn navigate_step(&mut self, obs: &ObservationDescriptors) -> Result<StepOutcome> {
        if !matches!(self.phase, Phase::Navigating | Phase::Relocalizing) {
            return Err(Error::InvalidPhase(self.phase.name()));
        }
        if obs.dim() != self.map.dim {
            return Err(Error::DimMismatch {
                expected: self.map.dim,
                found: obs.dim(),
            });
        }
        self.touched.clear();
        let cfg = self.config.clone();
        let last = self.last();
        let mut event = StepEvent::None;
        let mut s_ref = self.sim_to_plan(&obs.full, self.seq_pos)?;

        if self.seq_pos == last && s_ref > cfg.t_milestone {
            return Ok(self.reach(s_ref));
        }

        if s_ref < cfg.t_change_node && self.seq_pos < last {
            self.seq_pos += 1;
            s_ref = self.sim_to_plan(&obs.full, self.seq_pos)?;
            if s_ref > cfg.t_milestone {
                self.low_confidence_steps = 0;
                self.failed_relocalizations = 0;
                if self.seq_pos == last {
                    return Ok(self.reach(s_ref));
                }
                event = StepEvent::NodeSwitched(self.seq_pos);
            }
        }

        if s_ref <= cfg.t_milestone {
            self.low_confidence_steps += 1;
            if self.low_confidence_steps > cfg.low_confidence_limit {
                self.phase = Phase::Relocalizing;
                let lo = self.seq_pos.saturating_sub(cfg.match_window_behind);
                let hi = (self.seq_pos + cfg.match_window_ahead).min(last);
                self.last_window = self.plan[lo..=hi].to_vec();
                self.touched.extend_from_slice(&self.last_window);
                match localize(&obs.full, self.map, Some(&self.last_window), cfg.t_milestone)? {
                    LocalizationResult::Matched(id, score) => {
                        self.seq_pos = lo + self.plan[lo..=hi].iter().position(|&n| n == id).expect("match comes from the window");
                        self.relocalization_count += 1;
                        self.low_confidence_steps = 0;
                        self.failed_relocalizations = 0;
                        self.phase = Phase::Navigating;
                        s_ref = score;
                        if self.seq_pos == last {
                            return Ok(self.reach(s_ref));
                        }
                        event = StepEvent::RelocalizationTriggered;
                    }
                    LocalizationResult::BelowMilestone(..) => {
                        self.failed_relocalizations += 1;
                        self.cycle.clear();
                        if self.failed_relocalizations >= cfg.relocalization_limit {
                            self.phase = Phase::Failed;
                            return Ok(self.outcome(Action::NoAction, StepEvent::LocalizationFailed, s_ref));
                        }
                        return Ok(self.outcome(Action::RotateSearch, StepEvent::None, s_ref));
                    }
                }
            }
        } else {
            self.low_confidence_steps = 0;
            self.failed_relocalizations = 0;
            self.phase = Phase::Navigating;
        }

        let action = self.steer(obs)?;
        Ok(self.outcome(action, event, s_ref))
    }

    /// Steers toward the next planned node; if no segment clears the control
    /// threshold against it, falls back to the current reference node.
    fn steer(&mut self, obs: &ObservationDescriptors) -> Result<Action> {
        let t_ctrl = self.config.t_limited_control;
        let next = self.plan[(self.seq_pos + 1).min(self.last())];
        self.touched.push(next);
        let (mut raw, _) = segment_choice(obs, self.map.descriptor(next)?, t_ctrl)?;
        let reference = self.reference_node();
        if raw == Action::RotateSearch && next != reference {
            self.touched.push(reference);
            raw = segment_choice(obs, self.map.descriptor(reference)?, t_ctrl)?.0;
        }
        Ok(self.cycle.push(raw))
    }
}

/// One record of an episode log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeLogEntry {
    pub step: usize,
    pub action: Action,
    pub event: &'static str,
    pub seq_pos: Option<usize>,
    pub s_ref: Option<SimilarityScore>,
}

/// Drives a navigator from the very first observation: localizes the start
/// (asking for rotations while nothing matches), then steps.
pub struct Session<'m> {
    map: &'m TopologicalMap,
    config: ThresholdConfig,
    goal_node: NodeId,
    start_attempts_left: u32,
    nav: Option<NavigatorState<'m>>,
    steps: usize,
    failed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionStep {
    pub action: Action,
    pub event: StepEvent,
    pub seq_pos: Option<usize>,
    pub s_ref: Option<SimilarityScore>,
}

impl<'m> Session<'m> {
    /// Fails with `GoalNotInMap` right away if `goal` matches no node.
    pub fn new(map: &'m TopologicalMap, goal: &GlobalDescriptor, config: ThresholdConfig, start_attempts: u32) -> Result<Self> {
        let goal_node = localize_goal(map, goal, &config)?;
        Ok(Self::with_goal_node(map, goal_node, config, start_attempts))
    }

    pub fn with_goal_node(map: &'m TopologicalMap, goal_node: NodeId, config: ThresholdConfig, start_attempts: u32) -> Self {
        Self {
            map,
            config,
            goal_node,
            start_attempts_left: start_attempts.max(1),
            nav: None,
            steps: 0,
            failed: false,
        }
    }

    pub fn goal_node(&self) -> NodeId {
        self.goal_node
    }

    pub fn navigator(&self) -> Option<&NavigatorState<'m>> {
        self.nav.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn phase(&self) -> Phase {
        match &self.nav {
            _ if self.failed => Phase::Failed,
            None => Phase::LocalizingStart,
            Some(nav) => nav.phase(),
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase(), Phase::Reached | Phase::Failed)
    }

    pub fn relocalizations(&self) -> u32 {
        self.nav.as_ref().map_or(0, |n| n.relocalization_count())
    }

    pub fn step(&mut self, obs: &ObservationDescriptors) -> Result<SessionStep> {
        if self.is_done() {
            return Err(Error::InvalidPhase(self.phase().name()));
        }
        self.steps += 1;
        if self.nav.is_none() {
            match start_from(self.map, self.goal_node, &obs.full, &self.config)? {
                StartOutcome::Ready(nav) => self.nav = Some(nav),
                StartOutcome::NeedRotation(best) => {
                    self.start_attempts_left -= 1;
                    let (action, event) = if self.start_attempts_left == 0 {
                        self.failed = true;
                        (Action::NoAction, StepEvent::LocalizationFailed)
                    } else {
                        (Action::RotateSearch, StepEvent::None)
                    };
                    return Ok(SessionStep {
                        action,
                        event,
                        seq_pos: None,
                        s_ref: Some(best.score()),
                    });
                }
            }
        }
        let nav = self.nav.as_mut().expect("navigator is ready");
        let out = nav.navigate_step(obs)?;
        Ok(SessionStep {
            action: out.action,
            event: out.event,
            seq_pos: Some(out.seq_pos),
            s_ref: Some(out.s_ref),
        })
    }

    pub fn log_entry(&self, step: &SessionStep) -> EpisodeLogEntry {
        EpisodeLogEntry {
            step: self.steps,
            action: step.action,
            event: step.event.as_str(),
            seq_pos: step.seq_pos,
            s_ref: step.s_ref,
        }
    }
}
