//! Canonical diagram representation: labeled nodes, directed edges, and a
//! flow direction. Shared by synthesis, the DSL, rendering, description
//! generation, and hard-sample editing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Global layout orientation. A rendering property, not a graph property:
/// flipping it never changes the edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FlowDirection {
    #[default]
    TopDown,
    BottomUp,
}

impl FlowDirection {
    pub fn flipped(self) -> Self {
        match self {
            FlowDirection::TopDown => FlowDirection::BottomUp,
            FlowDirection::BottomUp => FlowDirection::TopDown,
        }
    }
}

/// Statement boxes versus question (decision) diamonds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Statement,
    Question,
}

impl NodeKind {
    /// A node is a question exactly when its right-trimmed label ends in '?'.
    pub fn for_label(label: &str) -> Self {
        if label.trim_end().ends_with('?') {
            NodeKind::Question
        } else {
            NodeKind::Statement
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
}

impl Node {
    /// Node with the kind implied by its label.
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        let label = label.into();
        let kind = NodeKind::for_label(&label);
        Node { id: id.into(), label, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from_id: String,
    pub to_id: String,
}

impl Edge {
    pub fn new(from_id: impl Into<String>, to_id: impl Into<String>) -> Self {
        Edge { from_id: from_id.into(), to_id: to_id.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagramGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub direction: FlowDirection,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has {found} nodes, need at least {need}")]
    TooFewNodes { need: usize, found: usize },
}

/// One invariant violation reported by [`DiagramGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNodeId { id: String },
    InvalidNodeId { id: String },
    EmptyLabel { id: String },
    LabelHasNewline { id: String },
    KindMismatch { id: String },
    DanglingEdge { index: usize, missing_id: String },
    SelfLoop { index: usize },
    DuplicateEdge { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNodeId { id } => write!(f, "duplicate node id {id}"),
            Violation::InvalidNodeId { id } => write!(f, "node id {id:?} does not match n[0-9]+"),
            Violation::EmptyLabel { id } => write!(f, "node {id} has an empty label"),
            Violation::LabelHasNewline { id } => write!(f, "node {id} label contains a newline"),
            Violation::KindMismatch { id } => {
                write!(f, "node {id} kind disagrees with its label's '?' suffix")
            }
            Violation::DanglingEdge { index, missing_id } => {
                write!(f, "edge #{index} references unknown node {missing_id}")
            }
            Violation::SelfLoop { index } => write!(f, "edge #{index} is a self-loop"),
            Violation::DuplicateEdge { index } => write!(f, "edge #{index} duplicates an earlier edge"),
        }
    }
}

fn valid_node_id(id: &str) -> bool {
    let mut chars = id.chars();
    chars.next() == Some('n')
        && id.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

/// Numeric suffix of a well-formed node id, used for deterministic ordering.
pub(crate) fn node_id_index(id: &str) -> Option<u64> {
    id.strip_prefix('n')?.parse().ok()
}

impl DiagramGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, direction: FlowDirection) -> Self {
        DiagramGraph { nodes, edges, direction }
    }

    pub fn node_by_id(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Edge endpoints as ordered id pairs, in edge order.
    pub fn edge_pairs(&self) -> Vec<(String, String)> {
        self.edges.iter().map(|e| (e.from_id.clone(), e.to_id.clone())).collect()
    }

    /// Edge endpoints as a set, the structural identity used by the
    /// hard-sample guarantees.
    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().map(|e| (e.from_id.clone(), e.to_id.clone())).collect()
    }

    /// Every invariant violation in the graph; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for node in &self.nodes {
            if !seen_ids.insert(node.id.as_str()) {
                out.push(Violation::DuplicateNodeId { id: node.id.clone() });
            }
            if !valid_node_id(&node.id) {
                out.push(Violation::InvalidNodeId { id: node.id.clone() });
            }
            if node.label.trim().is_empty() {
                out.push(Violation::EmptyLabel { id: node.id.clone() });
            } else if node.label.contains('\n') || node.label.contains('\r') {
                out.push(Violation::LabelHasNewline { id: node.id.clone() });
            } else if node.kind != NodeKind::for_label(&node.label) {
                out.push(Violation::KindMismatch { id: node.id.clone() });
            }
        }
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        let mut seen_edges = BTreeSet::new();
        for (index, edge) in self.edges.iter().enumerate() {
            for endpoint in [&edge.from_id, &edge.to_id] {
                if !ids.contains(endpoint.as_str()) {
                    out.push(Violation::DanglingEdge { index, missing_id: endpoint.clone() });
                }
            }
            if edge.from_id == edge.to_id {
                out.push(Violation::SelfLoop { index });
            }
            if !seen_edges.insert((edge.from_id.as_str(), edge.to_id.as_str())) {
                out.push(Violation::DuplicateEdge { index });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// True when the undirected version of the graph is connected.
    pub fn is_weakly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let index: BTreeMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        for edge in &self.edges {
            if let (Some(&a), Some(&b)) =
                (index.get(edge.from_id.as_str()), index.get(edge.to_id.as_str()))
            {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// True when some node bijection preserves labels, kinds, and directed edges.
/// Node order and the direction field are ignored.
pub fn is_isomorphic(a: &DiagramGraph, b: &DiagramGraph) -> bool {
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let n = a.nodes.len();
    if n == 0 {
        return true;
    }

    let index_of = |g: &DiagramGraph| -> BTreeMap<String, usize> {
        g.nodes.iter().enumerate().map(|(i, node)| (node.id.clone(), i)).collect()
    };
    let ia = index_of(a);
    let ib = index_of(b);
    let edges_of = |g: &DiagramGraph, idx: &BTreeMap<String, usize>| -> BTreeSet<(usize, usize)> {
        g.edges.iter().map(|e| (idx[&e.from_id], idx[&e.to_id])).collect()
    };
    let ea = edges_of(a, &ia);
    let eb = edges_of(b, &ib);

    let degrees = |edges: &BTreeSet<(usize, usize)>, n: usize| -> Vec<(usize, usize)> {
        let mut d = vec![(0, 0); n];
        for &(u, v) in edges {
            d[u].0 += 1;
            d[v].1 += 1;
        }
        d
    };
    let da = degrees(&ea, n);
    let db = degrees(&eb, n);

    // Candidate targets must agree on label, kind, and degree signature.
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (i, node) in a.nodes.iter().enumerate() {
        let set: Vec<usize> = b
            .nodes
            .iter()
            .enumerate()
            .filter(|(j, other)| {
                other.label == node.label && other.kind == node.kind && db[*j] == da[i]
            })
            .map(|(j, _)| j)
            .collect();
        if set.is_empty() {
            return false;
        }
        candidates.push(set);
    }

    fn assign(
        i: usize,
        mapping: &mut Vec<usize>,
        used: &mut Vec<bool>,
        candidates: &[Vec<usize>],
        ea: &BTreeSet<(usize, usize)>,
        eb: &BTreeSet<(usize, usize)>,
    ) -> bool {
        let n = candidates.len();
        if i == n {
            return true;
        }
        'next: for &j in &candidates[i] {
            if used[j] {
                continue;
            }
            // Edge consistency against already-mapped nodes, both directions.
            for k in 0..i {
                if ea.contains(&(i, k)) != eb.contains(&(j, mapping[k])) {
                    continue 'next;
                }
                if ea.contains(&(k, i)) != eb.contains(&(mapping[k], j)) {
                    continue 'next;
                }
            }
            if ea.contains(&(i, i)) != eb.contains(&(j, j)) {
                continue 'next;
            }
            mapping.push(j);
            used[j] = true;
            if assign(i + 1, mapping, used, candidates, ea, eb) {
                return true;
            }
            mapping.pop();
            used[j] = false;
        }
        false
    }

    assign(0, &mut Vec::with_capacity(n), &mut vec![false; n], &candidates, &ea, &eb)
}

/// All induced 3-node subgraphs whose undirected form is connected, ordered
/// by the original node-index triple. Nodes are relabeled n1..n3 in original
/// order; edges are restricted to the subset.
pub fn weakly_connected_triples(g: &DiagramGraph) -> Result<Vec<DiagramGraph>, GraphError> {
    debug_assert!(g.is_valid(), "weakly_connected_triples requires a valid graph");
    let n = g.nodes.len();
    if n < 3 {
        return Err(GraphError::TooFewNodes { need: 3, found: n });
    }
    let index: BTreeMap<&str, usize> =
        g.nodes.iter().enumerate().map(|(i, node)| (node.id.as_str(), i)).collect();

    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let members = [i, j, k];
                let induced: Vec<&Edge> = g
                    .edges
                    .iter()
                    .filter(|e| {
                        members.contains(&index[e.from_id.as_str()])
                            && members.contains(&index[e.to_id.as_str()])
                    })
                    .collect();
                // Three nodes are weakly connected iff the induced edges
                // cover at least two distinct undirected pairs.
                let pairs: BTreeSet<(usize, usize)> = induced
                    .iter()
                    .map(|e| {
                        let a = index[e.from_id.as_str()];
                        let b = index[e.to_id.as_str()];
                        (a.min(b), a.max(b))
                    })
                    .collect();
                if pairs.len() < 2 {
                    continue;
                }
                let relabel: BTreeMap<usize, String> = members
                    .iter()
                    .enumerate()
                    .map(|(pos, &orig)| (orig, format!("n{}", pos + 1)))
                    .collect();
                let nodes = members
                    .iter()
                    .map(|&orig| Node {
                        id: relabel[&orig].clone(),
                        label: g.nodes[orig].label.clone(),
                        kind: g.nodes[orig].kind,
                    })
                    .collect();
                let edges = induced
                    .iter()
                    .map(|e| {
                        Edge::new(
                            relabel[&index[e.from_id.as_str()]].clone(),
                            relabel[&index[e.to_id.as_str()]].clone(),
                        )
                    })
                    .collect();
                out.push(DiagramGraph::new(nodes, edges, g.direction));
            }
        }
    }
    Ok(out)
}
