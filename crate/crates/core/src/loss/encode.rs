//! Deterministic toy feature encoder.
//!
//! Stands in for the vision and text encoders so the loss kernels can be
//! exercised end to end without a neural network: tokens are hashed into a
//! fixed-dimension signed bag-of-tokens vector and normalized to unit
//! length. The hash is a pinned FNV-1a so vectors are stable across
//! platforms and builds.

use super::{LossError, Vector};
use crate::describe::Description;
use crate::dsl::DiagramCode;
use crate::graph::FlowDirection;
use crate::render::{SceneGraph, ShapeForm};

const MIN_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8], seed: u8) -> u64 {
    let mut hash = FNV_OFFSET ^ u64::from(seed).wrapping_mul(FNV_PRIME);
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Coordinate and sign a token hashes to.
pub(crate) fn token_coordinate(token: &str, dim: usize) -> (usize, f64) {
    let index = (fnv1a(token.as_bytes(), 1) % dim as u64) as usize;
    let sign = if fnv1a(token.as_bytes(), 2) & 1 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

/// Alphanumeric runs plus single punctuation characters, whitespace
/// dropped.
fn text_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Structural tokens of a scene: the direction flag, one token per shape
/// kind, and one per arrow endpoint pair.
fn scene_tokens(scene: &SceneGraph) -> Vec<String> {
    let mut tokens = vec![match scene.direction {
        FlowDirection::TopDown => "dir:TD".to_string(),
        FlowDirection::BottomUp => "dir:BT".to_string(),
    }];
    for shape in &scene.shapes {
        tokens.push(match shape.form {
            ShapeForm::Rectangle => "shape:rect".to_string(),
            ShapeForm::Diamond => "shape:diamond".to_string(),
        });
    }
    for arrow in &scene.arrows {
        tokens.push(format!("arrow:{}>{}", arrow.from_id, arrow.to_id));
    }
    tokens
}

/// Anything the toy encoder can turn into a feature vector.
#[derive(Debug, Clone, Copy)]
pub enum EncodableItem<'a> {
    Code(&'a DiagramCode),
    Description(&'a Description),
    Scene(&'a SceneGraph),
}

fn encode_tokens(tokens: &[String], dim: usize) -> Result<Vector, LossError> {
    if dim < MIN_DIM {
        return Err(LossError::BadDimension { dim });
    }
    if tokens.is_empty() {
        return Err(LossError::EmptyItem);
    }
    let mut v = vec![0.0; dim];
    for token in tokens {
        let (index, sign) = token_coordinate(token, dim);
        v[index] += sign;
    }
    let norm = super::norm(&v);
    if norm == 0.0 {
        return Err(LossError::ZeroVector);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(v)
}

/// Hash-encode a caption string (code text and descriptions tokenize the
/// same way).
pub fn toy_encode_text(text: &str, dim: usize) -> Result<Vector, LossError> {
    encode_tokens(&text_tokens(text), dim)
}

/// Hash-encode an item into a unit-length `dim`-vector.
pub fn toy_encode(item: EncodableItem<'_>, dim: usize) -> Result<Vector, LossError> {
    match item {
        EncodableItem::Code(code) => toy_encode_text(&code.text, dim),
        EncodableItem::Description(d) => {
            if d.sentences.is_empty() {
                return Err(LossError::EmptyItem);
            }
            toy_encode_text(&d.joined_text, dim)
        }
        EncodableItem::Scene(scene) => encode_tokens(&scene_tokens(scene), dim),
    }
}
