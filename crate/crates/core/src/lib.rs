//! Topological mapping and navigation over global place descriptors.
//!
//! Frames arrive as unit-norm descriptors. [`builder`] turns a recorded
//! stream into a directed [`TopologicalMap`] whose arcs carry relative
//! distances, [`navigator`] plans over that map and emits discrete motion
//! commands, and [`sim`] closes the loop in a synthetic world.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod descriptor;
pub mod error;
pub mod graph;
pub mod navigator;
pub mod sim;
pub mod stream;

pub use builder::{build_map, optimize, BuildLogEntry, BuildOutput, MapBuilder, MapUpdate};
pub use descriptor::{
    best_match, calibrate_thresholds, cosine_similarity, GlobalDescriptor, ObservationDescriptors, Segments,
    SimilarityScore, ThresholdConfig,
};
pub use error::{Error, Result};
pub use graph::{NodeId, Path, TopoArc, TopoNode, TopologicalMap};
pub use navigator::{
    arbitrate, localize, select_action, start_navigation, Action, LocalizationResult, NavigatorState, Phase,
    Session, StartOutcome, StepEvent, StepOutcome,
};
pub use sim::{KinematicParams, Pose, SimParams, SimWorld};
