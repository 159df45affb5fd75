//! Connectivity graph with per-node privacy flags, and the rotating
//! degree-based aggregator election.
//!
//! A node is elected aggregator when it has the highest connectivity degree
//! among nodes that have not served recently: the most recent
//! `min(|history|, K - 1)` aggregators are ineligible, which forces a full
//! rotation every K rounds while still preferring well-connected nodes.
//! Ties break toward the lowest node id, so election is deterministic.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Undirected connectivity graph over nodes `0..node_count`, with a
/// per-node flag saying whether that node privatizes its updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpGraph {
    node_count: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
    dp_flags: Vec<bool>,
    adjacency: Vec<Vec<NodeId>>,
}

impl DpGraph {
    /// Builds a graph from unordered node-id pairs. Self-loops, duplicate
    /// edges (in either orientation), and out-of-range ids are rejected.
    /// `dp_flags` must have one entry per node.
    pub fn new(node_count: usize, edges: &[(NodeId, NodeId)], dp_flags: Vec<bool>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument("graph must have at least one node".into()));
        }
        if dp_flags.len() != node_count {
            return Err(Error::InvalidArgument(format!(
                "dp_flags has {} entries for {} nodes",
                dp_flags.len(),
                node_count
            )));
        }
        let mut set = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            let canon = (a.min(b), a.max(b));
            if !set.insert(canon) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) listed more than once",
                    canon.0, canon.1
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: set,
            dp_flags,
            adjacency,
        })
    }

    /// The five-node incomplete topology shipped with the default configs.
    /// Degrees are [2, 4, 2, 3, 3]; over five rounds the rotation visits
    /// every node once and leaves one or two nodes unreachable in each of
    /// rounds 2-5.
    pub fn default_five_node(dp_flags: Vec<bool>) -> Result<Self> {
        Self::new(5, Self::DEFAULT_FIVE_NODE_EDGES, dp_flags)
    }

    pub const DEFAULT_FIVE_NODE_EDGES: &'static [(NodeId, NodeId)] =
        &[(0, 1), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (3, 4)];

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn dp_flags(&self) -> &[bool] {
        &self.dp_flags
    }

    pub fn dp_enabled(&self, node: NodeId) -> bool {
        self.dp_flags.get(node).copied().unwrap_or(false)
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node >= self.node_count {
            return Err(Error::InvalidArgument(format!(
                "node {node} outside 0..{}",
                self.node_count
            )));
        }
        Ok(())
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: NodeId) -> Result<&[NodeId]> {
        self.check_node(node)?;
        Ok(&self.adjacency[node])
    }

    /// Number of edges incident to `node`.
    pub fn degree(&self, node: NodeId) -> Result<usize> {
        self.check_node(node)?;
        Ok(self.adjacency[node].len())
    }
}

/// One round's cast: who aggregates, who provides, who sits out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub round_index: usize,
    pub aggregator: NodeId,
    /// Neighbors of the aggregator, ascending.
    pub providers: Vec<NodeId>,
    /// Everyone else (not adjacent to the aggregator), ascending.
    pub non_participants: Vec<NodeId>,
}

impl RoundPlan {
    pub fn is_participant(&self, node: NodeId) -> bool {
        node == self.aggregator || self.providers.binary_search(&node).is_ok()
    }
}

/// Picks the next aggregator: the highest-degree connected node that does
/// not appear in the most recent `min(|history|, K - 1)` history entries,
/// ties broken by lowest id. Pure in (graph, round_index, history).
pub fn elect_aggregator(graph: &DpGraph, _round_index: usize, history: &[NodeId]) -> Result<NodeId> {
    if !graph.has_edges() {
        return Err(Error::NoCandidate);
    }
    let window = history.len().min(graph.node_count() - 1);
    let recent = &history[history.len() - window..];
    let mut best: Option<(usize, NodeId)> = None;
    for node in 0..graph.node_count() {
        let deg = graph.adjacency[node].len();
        if deg == 0 || recent.contains(&node) {
            continue;
        }
        let better = match best {
            None => true,
            Some((best_deg, _)) => deg > best_deg,
        };
        if better {
            best = Some((deg, node));
        }
    }
    best.map(|(_, node)| node).ok_or(Error::ElectionExhausted)
}

/// Elects the aggregator for `round_index`, derives the provider and
/// non-participant sets, and appends the aggregator to `history`.
pub fn plan_round(
    graph: &DpGraph,
    round_index: usize,
    history: &mut Vec<NodeId>,
) -> Result<RoundPlan> {
    let aggregator = elect_aggregator(graph, round_index, history)?;
    history.push(aggregator);
    Ok(assemble_plan(graph, round_index, aggregator))
}

/// Builds the plan for a fixed aggregator; used by the centralized mode
/// where no election takes place.
pub fn assemble_plan(graph: &DpGraph, round_index: usize, aggregator: NodeId) -> RoundPlan {
    let providers = graph.adjacency[aggregator].clone();
    let non_participants = (0..graph.node_count())
        .filter(|&n| n != aggregator && providers.binary_search(&n).is_err())
        .collect();
    RoundPlan {
        round_index,
        aggregator,
        providers,
        non_participants,
    }
}
