//! Incremental map construction from a descriptor stream, and post-hoc
//! map optimization.

use serde::Serialize;

use crate::descriptor::{best_match_by, cosine_similarity, GlobalDescriptor, ObservationDescriptors, SimilarityScore, ThresholdConfig};
use crate::error::{Error, Result};
use crate::graph::{NodeId, TopoArc, TopologicalMap};

/// Outcome of feeding one frame to the builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MapUpdate {
    NoChange,
    DistanceIncremented,
    NodeAdded { id: NodeId, from: NodeId, weight: u64 },
    LoopClosed { from: NodeId, to: NodeId, weight: u64 },
}

impl MapUpdate {
    pub fn is_node_event(&self) -> bool {
        matches!(self, MapUpdate::NodeAdded { .. } | MapUpdate::LoopClosed { .. })
    }
}

/// One line of the build log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BuildLogEntry {
    pub frame: u64,
    #[serde(flatten)]
    pub update: MapUpdate,
    /// Similarity to the last node, as seen by the node-addition gate.
    pub s_last: SimilarityScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapBuilder {
    map: TopologicalMap,
    last_node: NodeId,
    m_distance: u64,
    prev_descriptor: GlobalDescriptor,
    prev_frame: u64,
    frames_since_last_node: u64,
    /// Node ids in insertion order; the tail is excluded from loop matching.
    recent: Vec<NodeId>,
}

impl MapBuilder {
    /// Starts a map whose node 0 is `first`.
    pub fn begin(first: &ObservationDescriptors, config: ThresholdConfig) -> Self {
        let mut map = TopologicalMap::new(first.dim(), config);
        let id = map
            .add_node(first.frame_index, first.full.clone())
            .expect("first node matches map dim by construction");
        Self {
            map,
            last_node: id,
            m_distance: 0,
            prev_descriptor: first.full.clone(),
            prev_frame: first.frame_index,
            frames_since_last_node: 0,
            recent: vec![id],
        }
    }

    pub fn map(&self) -> &TopologicalMap {
        &self.map
    }

    pub fn config(&self) -> &ThresholdConfig {
        &self.map.config
    }

    pub fn last_node(&self) -> NodeId {
        self.last_node
    }

    pub fn m_distance(&self) -> u64 {
        self.m_distance
    }

    pub fn frames_since_last_node(&self) -> u64 {
        self.frames_since_last_node
    }

    /// Similarity between `frame` and the last node, as the gate will see it.
    pub fn s_last(&self, frame: &ObservationDescriptors) -> Result<SimilarityScore> {
        cosine_similarity(&frame.full, self.map.descriptor(self.last_node)?)
    }

    pub fn process_frame(&mut self, frame: &ObservationDescriptors) -> Result<MapUpdate> {
        if frame.dim() != self.map.dim {
            return Err(Error::DimMismatch {
                expected: self.map.dim,
                found: frame.dim(),
            });
        }
        if frame.frame_index <= self.prev_frame {
            return Err(Error::NonMonotonicFrame {
                prev: self.prev_frame,
                got: frame.frame_index,
            });
        }
        let cfg = &self.map.config;
        self.prev_frame = frame.frame_index;
        self.frames_since_last_node += 1;

        let moved = cosine_similarity(&frame.full, &self.prev_descriptor)? < cfg.t_add_distance;
        if moved {
            self.m_distance += 1;
        }
        self.prev_descriptor = frame.full.clone();

        let s_last = self.s_last(frame)?;
        if s_last >= cfg.t_add_new_node || self.frames_since_last_node < u64::from(cfg.t_interval) {
            return Ok(if moved {
                MapUpdate::DistanceIncremented
            } else {
                MapUpdate::NoChange
            });
        }

        let eligible = self.recent.len().saturating_sub(cfg.loop_exclusion);
        let candidates = self.recent[..eligible].iter().map(|&id| (id, &self.map.nodes[id].descriptor));
        let loop_match = match best_match_by(&frame.full, candidates) {
            Ok((id, score)) if score > cfg.t_loop_closure => Some(id),
            Ok(_) | Err(Error::EmptyCandidates) => None,
            Err(e) => return Err(e),
        };

        let from = self.last_node;
        let weight = self.m_distance;
        let update = match loop_match {
            Some(to) => {
                self.map.add_arc(from, to, weight)?;
                self.last_node = to;
                MapUpdate::LoopClosed { from, to, weight }
            }
            None => {
                let id = self.map.add_node(frame.frame_index, frame.full.clone())?;
                self.map.add_arc(from, id, weight)?;
                self.recent.push(id);
                self.last_node = id;
                MapUpdate::NodeAdded { id, from, weight }
            }
        };
        self.m_distance = 0;
        self.frames_since_last_node = 0;
        Ok(update)
    }

    /// Returns the map built so far after checking its invariants.
    pub fn finalize(&self) -> Result<TopologicalMap> {
        self.map.validate()?;
        Ok(self.map.clone())
    }
}

/// Result of [`build_map`]: the map, one log entry per frame after the
/// first, and the distance left uncommitted at the end of the stream.
#[derive(Clone, Debug)]
pub struct BuildOutput {
    pub map: TopologicalMap,
    pub log: Vec<BuildLogEntry>,
    pub residual_distance: u64,
}

impl BuildOutput {
    pub fn loop_closures(&self) -> usize {
        self.log
            .iter()
            .filter(|e| matches!(e.update, MapUpdate::LoopClosed { .. }))
            .count()
    }
}

pub fn build_map(stream: &[ObservationDescriptors], config: ThresholdConfig) -> Result<BuildOutput> {
    let (first, rest) = stream.split_first().ok_or(Error::StreamTooShort { len: 0, needed: 1 })?;
    config.validate()?;
    let mut builder = MapBuilder::begin(first, config);
    let mut log = Vec::with_capacity(rest.len());
    for frame in rest {
        let s_last = builder.s_last(frame)?;
        let update = builder.process_frame(frame)?;
        log.push(BuildLogEntry {
            frame: frame.frame_index,
            update,
            s_last,
        });
    }
    Ok(BuildOutput {
        map: builder.finalize()?,
        log,
        residual_distance: builder.m_distance(),
    })
}

/// Merges near-duplicate nodes, then contracts redundant chain nodes, then
/// renumbers ids to `0..n`.
pub fn optimize(map: &TopologicalMap, merge_similarity: SimilarityScore, sparsify_similarity: SimilarityScore) -> Result<TopologicalMap> {
    if merge_similarity <= sparsify_similarity {
        return Err(Error::BadThresholds {
            merge: merge_similarity.value(),
            sparsify: sparsify_similarity.value(),
        });
    }
    map.validate()?;
    let mut g = Working::from_map(map);
    while let Some((i, j)) = g.best_duplicate_pair(merge_similarity)? {
        g.merge(i, j);
    }
    while g.contract_one(sparsify_similarity)? {}
    let out = g.into_map(map);
    out.validate()?;
    Ok(out)
}

/// Adjacency with tombstones; ids keep their original values until `into_map`.
struct Working<'a> {
    alive: Vec<bool>,
    out: Vec<Vec<TopoArc>>,
    src: &'a TopologicalMap,
}

impl<'a> Working<'a> {
    fn from_map(map: &'a TopologicalMap) -> Self {
        Self {
            alive: vec![true; map.len()],
            out: map.nodes.iter().map(|n| n.arcs.clone()).collect(),
            src: map,
        }
    }

    fn sim(&self, a: NodeId, b: NodeId) -> Result<SimilarityScore> {
        cosine_similarity(&self.src.nodes[a].descriptor, &self.src.nodes[b].descriptor)
    }

    fn live(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.alive.len()).filter(|&i| self.alive[i])
    }

    /// Highest-similarity live pair at or above `threshold`; ties go to the
    /// lexicographically smallest `(i, j)`.
    fn best_duplicate_pair(&self, threshold: SimilarityScore) -> Result<Option<(NodeId, NodeId)>> {
        let mut best: Option<(SimilarityScore, NodeId, NodeId)> = None;
        let live: Vec<NodeId> = self.live().collect();
        for (k, &i) in live.iter().enumerate() {
            for &j in &live[k + 1..] {
                let s = self.sim(i, j)?;
                if s >= threshold && best.is_none_or(|(bs, _, _)| s > bs) {
                    best = Some((s, i, j));
                }
            }
        }
        Ok(best.map(|(_, i, j)| (i, j)))
    }

    fn insert_arc(&mut self, from: NodeId, to: NodeId, weight: u64) {
        if from == to {
            return;
        }
        match self.out[from].iter_mut().find(|a| a.to == to) {
            Some(arc) => arc.weight = arc.weight.min(weight),
            None => self.out[from].push(TopoArc { to, weight }),
        }
    }

    /// Folds `j` into `i`: every arc touching `j` now touches `i`.
    fn merge(&mut self, i: NodeId, j: NodeId) {
        self.alive[j] = false;
        for arc in std::mem::take(&mut self.out[j]) {
            self.insert_arc(i, arc.to, arc.weight);
        }
        for u in 0..self.out.len() {
            if !self.alive[u] {
                continue;
            }
            let redirected: Vec<TopoArc> = self.out[u].iter().filter(|a| a.to == j).copied().collect();
            self.out[u].retain(|a| a.to != j);
            for arc in redirected {
                self.insert_arc(u, i, arc.weight);
            }
        }
        // arcs i -> j became i -> i and were dropped by insert_arc
        self.out[i].retain(|a| a.to != i);
    }

    fn in_arcs(&self, v: NodeId) -> Vec<(NodeId, u64)> {
        self.live()
            .filter_map(|u| self.out[u].iter().find(|a| a.to == v).map(|a| (u, a.weight)))
            .collect()
    }

    /// Removes the lowest-id contractible node, if any.
    fn contract_one(&mut self, threshold: SimilarityScore) -> Result<bool> {
        let live: Vec<NodeId> = self.live().collect();
        for v in live {
            if self.out[v].len() != 1 {
                continue;
            }
            let ins = self.in_arcs(v);
            if ins.len() != 1 {
                continue;
            }
            let (u, w1) = ins[0];
            let TopoArc { to: x, weight: w2 } = self.out[v][0];
            if u == x || self.sim(u, v)? < threshold {
                continue;
            }
            self.alive[v] = false;
            self.out[v].clear();
            self.out[u].retain(|a| a.to != v);
            self.insert_arc(u, x, w1 + w2);
            return Ok(true);
        }
        Ok(false)
    }

    fn into_map(self, template: &TopologicalMap) -> TopologicalMap {
        let mut remap = vec![usize::MAX; self.alive.len()];
        let mut next = 0;
        for (old, &alive) in self.alive.iter().enumerate() {
            if alive {
                remap[old] = next;
                next += 1;
            }
        }
        let mut out = TopologicalMap::new(template.dim, template.config.clone());
        out.version = template.version.clone();
        for old in self.live() {
            let src = &template.nodes[old];
            out.nodes.push(crate::graph::TopoNode {
                id: remap[old],
                frame_index: src.frame_index,
                descriptor: src.descriptor.clone(),
                arcs: self.out[old]
                    .iter()
                    .map(|a| TopoArc {
                        to: remap[a.to],
                        weight: a.weight,
                    })
                    .collect(),
            });
        }
        out
    }
}
