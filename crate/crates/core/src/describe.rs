//! Rule-based natural-language captions: one sentence per edge, with a
//! Yes/No branch state tracked per question node.

use std::collections::BTreeMap;

use crate::graph::{DiagramGraph, NodeKind};

/// Generated caption: per-edge sentences plus their space-joined form, the
/// string used as the training caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub sentences: Vec<String>,
    pub joined_text: String,
}

/// Generate the caption for a diagram.
///
/// Edges are processed in edge order. A statement source yields
/// `From {s}: Proceed to {d}`. A question source yields
/// `From {s}: If **{b}**, proceed to {d}` where the branch text `b` starts
/// at `Yes` and advances `Yes` -> `No` -> `` (empty) per source node; third
/// and later branches keep the empty string.
pub fn describe(g: &DiagramGraph) -> Description {
    debug_assert!(g.is_valid(), "describe requires a valid graph: {:?}", g.validate());
    let mut branch_state: BTreeMap<&str, &str> =
        g.nodes.iter().map(|n| (n.id.as_str(), "Yes")).collect();
    let mut sentences = Vec::with_capacity(g.edges.len());
    for edge in &g.edges {
        let source = g.node_by_id(&edge.from_id).expect("validated edge endpoint");
        let target = g.node_by_id(&edge.to_id).expect("validated edge endpoint");
        let sentence = match source.kind {
            NodeKind::Question => {
                let state = branch_state.get_mut(edge.from_id.as_str()).unwrap();
                let sentence = format!(
                    "From {}: If **{}**, proceed to {}",
                    source.label, state, target.label
                );
                *state = match *state {
                    "Yes" => "No",
                    _ => "",
                };
                sentence
            }
            NodeKind::Statement => {
                format!("From {}: Proceed to {}", source.label, target.label)
            }
        };
        sentences.push(sentence);
    }
    let joined_text = sentences.join(" ");
    Description { sentences, joined_text }
}
