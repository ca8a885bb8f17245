//! Pseudo diagram synthesis: pick spatially close text combinations as node
//! sets, then generate weakly connected directed structures over them with a
//! seeded stream. Semantic plausibility is explicitly not a goal; structural
//! variety is.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::describe::{describe, Description};
use crate::dsl::{emit_code, DiagramCode};
use crate::graph::{DiagramGraph, Edge, FlowDirection, Node};
use crate::ocr::{OcrDocument, TextElement};
use crate::rng::RngKey;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("document {source_id} has {found} elements, need at least {need}")]
    TooFewElements { source_id: String, need: usize, found: usize },
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisConfig {
    /// Number of nodes per pseudo diagram.
    pub node_size: usize,
    /// Number of nearest-neighbour combinations kept per document.
    pub sampling_size: usize,
    /// Cap on generated connection structures per combination.
    pub max_diagrams: usize,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { node_size: 3, sampling_size: 5, max_diagrams: 4, seed: 0 }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.node_size < 2 {
            return Err(SynthesisError::InvalidConfig("node_size must be >= 2".into()));
        }
        if self.sampling_size < 1 {
            return Err(SynthesisError::InvalidConfig("sampling_size must be >= 1".into()));
        }
        if self.max_diagrams < 1 {
            return Err(SynthesisError::InvalidConfig("max_diagrams must be >= 1".into()));
        }
        Ok(())
    }
}

/// A candidate node set: `node_size` distinct elements of one document and
/// the sum of pairwise Euclidean distances between their positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCombination {
    pub elements: Vec<TextElement>,
    /// Positions of the elements in the source document.
    pub indices: Vec<usize>,
    pub dist: f64,
}

fn pairwise_distance_sum(elements: &[&TextElement]) -> f64 {
    let mut total = 0.0;
    for i in 0..elements.len() {
        for j in (i + 1)..elements.len() {
            let dx = elements[i].x - elements[j].x;
            let dy = elements[i].y - elements[j].y;
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    total
}

/// The `sampling_size` combinations with smallest distance sum, ascending,
/// ties broken by lexicographic element-index order. Returns all
/// combinations when fewer exist than requested.
pub fn select_combinations(
    doc: &OcrDocument,
    cfg: &SynthesisConfig,
) -> Result<Vec<NodeCombination>, SynthesisError> {
    cfg.validate()?;
    let n = doc.elements.len();
    let k = cfg.node_size;
    if n < k {
        return Err(SynthesisError::TooFewElements {
            source_id: doc.source_id.clone(),
            need: k,
            found: n,
        });
    }

    let mut scored: Vec<NodeCombination> = Vec::new();
    let mut indices: Vec<usize> = (0..k).collect();
    loop {
        let members: Vec<&TextElement> = indices.iter().map(|&i| &doc.elements[i]).collect();
        scored.push(NodeCombination {
            elements: members.iter().map(|e| (*e).clone()).collect(),
            indices: indices.clone(),
            dist: pairwise_distance_sum(&members),
        });
        // Advance to the next combination in lexicographic order.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if indices[pos] != pos + n - k {
                indices[pos] += 1;
                for later in (pos + 1)..k {
                    indices[later] = indices[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                indices.clear();
            }
        }
        if indices.is_empty() {
            break;
        }
    }

    scored.sort_by(|a, b| a.dist.total_cmp(&b.dist).then_with(|| a.indices.cmp(&b.indices)));
    scored.truncate(cfg.sampling_size);
    Ok(scored)
}

/// How many superset draws to attempt before giving up on reaching the cap
/// (the distinct-structure space can be smaller than `max_diagrams`).
fn draw_budget(cfg: &SynthesisConfig) -> usize {
    cfg.max_diagrams * 8 + 16
}

/// Generate connection structures over a combination's nodes.
///
/// Node ids n1..nk are assigned in ascending (y, x) position order so n1 is
/// visually topmost. One random spanning chain (a shuffled node permutation
/// chained with directed edges) guarantees weak connectivity; supersets are
/// drawn by toggling each remaining ordered pair with probability 1/2,
/// deduplicated, and capped at `max_diagrams` in generation order. The
/// stream is keyed by `(seed, image_index, combo_index)`.
pub fn random_connections(
    combination: &NodeCombination,
    cfg: &SynthesisConfig,
    image_index: usize,
    combo_index: usize,
) -> Vec<DiagramGraph> {
    let key = RngKey::from_seed(cfg.seed)
        .child("image", image_index as u64)
        .child("combo", combo_index as u64);
    let mut rng = key.rng();

    let k = combination.elements.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ea = &combination.elements[a];
        let eb = &combination.elements[b];
        ea.y.total_cmp(&eb.y).then(ea.x.total_cmp(&eb.x)).then(a.cmp(&b))
    });
    let nodes: Vec<Node> = order
        .iter()
        .enumerate()
        .map(|(pos, &orig)| {
            Node::new(format!("n{}", pos + 1), combination.elements[orig].text.trim())
        })
        .collect();

    // Spanning chain over a uniformly shuffled node sequence (Fisher-Yates,
    // hand-rolled so the stream layout is pinned by this crate).
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let chain: BTreeSet<(usize, usize)> =
        perm.windows(2).map(|w| (w[0], w[1])).collect();
    let remaining: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !chain.contains(&(i, j)))
        .collect();

    let mut seen: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    let mut graphs = Vec::new();
    for _ in 0..draw_budget(cfg) {
        if graphs.len() >= cfg.max_diagrams {
            break;
        }
        let mut edge_set: BTreeSet<(usize, usize)> = chain.clone();
        for &pair in &remaining {
            if rng.random_bool(0.5) {
                edge_set.insert(pair);
            }
        }
        let ordered: Vec<(usize, usize)> = edge_set.into_iter().collect();
        if !seen.insert(ordered.clone()) {
            continue;
        }
        let edges = ordered
            .iter()
            .map(|&(i, j)| Edge::new(nodes[i].id.clone(), nodes[j].id.clone()))
            .collect();
        let graph = DiagramGraph::new(nodes.clone(), edges, FlowDirection::TopDown);
        debug_assert!(graph.is_valid());
        debug_assert!(graph.is_weakly_connected());
        graphs.push(graph);
    }
    graphs
}

/// One synthesized pseudo diagram: the graph, its definition code, and its
/// rule-based caption. The rendered image is produced from the code by the
/// render module.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedDiagram {
    pub graph: DiagramGraph,
    pub code: DiagramCode,
    pub description: Description,
}

/// Full synthesis for one document: combination order, then generation
/// order. Deterministic for a fixed `(doc, cfg, image_index)`.
pub fn synthesize(
    doc: &OcrDocument,
    cfg: &SynthesisConfig,
    image_index: usize,
) -> Result<Vec<SynthesizedDiagram>, SynthesisError> {
    let combinations = select_combinations(doc, cfg)?;
    let mut out = Vec::new();
    for (combo_index, combination) in combinations.iter().enumerate() {
        for graph in random_connections(combination, cfg, image_index, combo_index) {
            let code = emit_code(&graph);
            let description = describe(&graph);
            out.push(SynthesizedDiagram { graph, code, description });
        }
    }
    Ok(out)
}
