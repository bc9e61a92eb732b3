//! Directed topological map with relative-distance arc weights.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::descriptor::{GlobalDescriptor, ThresholdConfig};
use crate::error::{Error, Result};

pub type NodeId = usize;

pub const MAP_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopoArc {
    pub to: NodeId,
    pub weight: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopoNode {
    pub id: NodeId,
    #[serde(rename = "frame")]
    pub frame_index: u64,
    pub descriptor: GlobalDescriptor,
    pub arcs: Vec<TopoArc>,
}

impl TopoNode {
    pub fn arc_to(&self, to: NodeId) -> Option<&TopoArc> {
        self.arcs.iter().find(|a| a.to == to)
    }
}

/// Whether [`TopologicalMap::add_arc`] created an arc or folded into an existing one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcInsert {
    Added,
    Merged { previous: u64 },
}

/// A path through the map and its total weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologicalMap {
    pub version: String,
    pub dim: usize,
    pub config: ThresholdConfig,
    pub nodes: Vec<TopoNode>,
}

impl TopologicalMap {
    pub fn new(dim: usize, config: ThresholdConfig) -> Self {
        Self {
            version: MAP_VERSION.to_string(),
            dim,
            config,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn arc_count(&self) -> usize {
        self.nodes.iter().map(|n| n.arcs.len()).sum()
    }

    pub fn node(&self, id: NodeId) -> Result<&TopoNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn descriptor(&self, id: NodeId) -> Result<&GlobalDescriptor> {
        self.node(id).map(|n| &n.descriptor)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = (NodeId, &GlobalDescriptor)> {
        self.nodes.iter().map(|n| (n.id, &n.descriptor))
    }

    pub fn add_node(&mut self, frame_index: u64, descriptor: GlobalDescriptor) -> Result<NodeId> {
        if descriptor.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: descriptor.dim(),
            });
        }
        let id = self.nodes.len();
        self.nodes.push(TopoNode {
            id,
            frame_index,
            descriptor,
            arcs: Vec::new(),
        });
        Ok(id)
    }

    /// Adds `from -> to`, keeping the smaller weight if the arc already exists.
    pub fn add_arc(&mut self, from: NodeId, to: NodeId, weight: u64) -> Result<ArcInsert> {
        if from == to {
            return Err(Error::SelfArc(from));
        }
        self.node(to)?;
        let node = self.nodes.get_mut(from).ok_or(Error::UnknownNode(from))?;
        match node.arcs.iter_mut().find(|a| a.to == to) {
            Some(arc) => {
                let previous = arc.weight;
                arc.weight = arc.weight.min(weight);
                Ok(ArcInsert::Merged { previous })
            }
            None => {
                node.arcs.push(TopoArc { to, weight });
                Ok(ArcInsert::Added)
            }
        }
    }

    /// Dijkstra over arc weights.
    ///
    /// Equal-cost paths are ordered by node count, then by id sequence, so the
    /// result is a pure function of the graph. Labels carry their full path;
    /// extending two labels by the same arc preserves their order, which keeps
    /// the first settled label per node optimal under the combined key.
    pub fn shortest_path(&self, start: NodeId, goal: NodeId) -> Result<Path> {
        self.node(start)?;
        self.node(goal)?;
        let mut settled = vec![false; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, 1usize, vec![start])));
        while let Some(Reverse((cost, hops, path))) = heap.pop() {
            let here = *path.last().expect("paths are never empty");
            if settled[here] {
                continue;
            }
            settled[here] = true;
            if here == goal {
                return Ok(Path { nodes: path, cost });
            }
            for arc in &self.nodes[here].arcs {
                if settled[arc.to] {
                    continue;
                }
                let mut next = path.clone();
                next.push(arc.to);
                heap.push(Reverse((cost + arc.weight, hops + 1, next)));
            }
        }
        Err(Error::NoPath { from: start, to: goal })
    }

    /// Sum of arc weights along `nodes`, or `None` if some hop has no arc.
    pub fn path_cost(&self, nodes: &[NodeId]) -> Option<u64> {
        nodes.windows(2).try_fold(0u64, |acc, w| {
            self.nodes.get(w[0])?.arc_to(w[1]).map(|a| acc + a.weight)
        })
    }

    /// Checks every structural invariant of a finished map.
    pub fn validate(&self) -> Result<()> {
        if self.version != MAP_VERSION {
            return Err(Error::Version(self.version.clone()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidMap(format!("node at position {i} has id {}", node.id)));
            }
            if node.descriptor.dim() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: node.descriptor.dim(),
                });
            }
            for (k, arc) in node.arcs.iter().enumerate() {
                if arc.to == i {
                    return Err(Error::SelfArc(i));
                }
                if arc.to >= self.nodes.len() {
                    return Err(Error::InvalidMap(format!("arc {i} -> {} points past the map", arc.to)));
                }
                if node.arcs[..k].iter().any(|a| a.to == arc.to) {
                    return Err(Error::InvalidMap(format!("parallel arcs {i} -> {}", arc.to)));
                }
            }
        }
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph topomap {\n");
        for node in &self.nodes {
            let _ = writeln!(out, "    N{0} [label=\"N{0}\"];", node.id);
        }
        for node in &self.nodes {
            for arc in &node.arcs {
                let _ = writeln!(out, "    N{} -> N{} [label=\"{}\"];", node.id, arc.to, arc.weight);
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Check the version before the full parse so an unknown layout is
        // reported as a version problem rather than a field error.
        #[derive(Deserialize)]
        struct Probe {
            version: Option<String>,
        }
        if let Ok(Probe { version: Some(v) }) = serde_json::from_str::<Probe>(text) {
            if v != MAP_VERSION {
                return Err(Error::Version(v));
            }
        }
        let map: Self = serde_json::from_str(text).map_err(|e| Error::from_json(e, 0))?;
        map.validate()?;
        Ok(map)
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
