//! Raster-only flowchart contrastive-data pipeline.
//!
//! From OCR word positions the crate synthesizes pseudo flowcharts with
//! deterministic random connections, emits their definition codes and
//! rule-based captions, renders editable scenes to SVG, derives hard
//! positive/negative images and captions by rule-based edits, and provides a
//! reference implementation of the structure-aware contrastive objective
//! with verified analytic gradients.

pub mod describe;
pub mod dsl;
pub mod graph;
pub mod hard_samples;
pub mod loss;
pub mod ocr;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod synthesis;

pub use describe::{describe, Description};
pub use dsl::{emit_code, parse_code, parse_code_bytes, DiagramCode, DslError, ParseOutcome};
pub use graph::{
    is_isomorphic, weakly_connected_triples, DiagramGraph, Edge, FlowDirection, GraphError, Node,
    NodeKind, Violation,
};
pub use hard_samples::{
    hard_negative_captions, hard_negative_images, hard_positive_caption, hard_positive_images,
    make_hard_sample_set, verify_hard_sample_set, EditRecord, GenerationStats, HardSampleConfig,
    HardSampleError, HardSampleOutcome, HardSampleSet, SampleKind,
};
pub use loss::{
    abs_cos_sim, grad_check, info_nce, negative_similarity, positive_similarity, sc_loss,
    total_loss, total_loss_with_grad, toy_encode, toy_encode_text, EmbeddingBatch, EncodableItem,
    GradCheckReport, LossConfig, LossError,
};
pub use ocr::{
    crop_caption, group_words, parse_elements_json, parse_tesseract_tsv, to_tesseract_tsv,
    OcrDocument, OcrError, TextElement,
};
pub use render::{
    apply_scene_edit, layout, scene_to_graph, scene_violations, to_svg, Arrow, ArrowHead,
    PlacedShape, RenderError, SceneEdit, SceneGraph, ShapeForm,
};
pub use rng::RngKey;
pub use synthesis::{
    random_connections, select_combinations, synthesize, NodeCombination, SynthesisConfig,
    SynthesisError, SynthesizedDiagram,
};
