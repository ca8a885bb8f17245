//! Pipeline orchestration: the pseudo / gran / crop-captions modes, the
//! JSONL manifest with content digests, and the loss-fixture report.
//!
//! Runs are deterministic end to end: documents are processed in sorted
//! input order, every randomized stage draws from a key derived from the
//! run seed, and records are sorted by id before the manifest is written.
//! Two runs with identical config and inputs produce byte-identical output
//! trees.

use std::collections::BTreeMap;
use std::fs;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::describe::{describe, Description};
use crate::dsl::{emit_code, parse_code};
use crate::graph::{weakly_connected_triples, DiagramGraph};
use crate::hard_samples::{
    make_hard_sample_set, verify_hard_sample_set, EditRecord, GenerationStats, HardSampleConfig,
};
use crate::loss::{
    grad_check, info_nce, sc_loss, total_loss, toy_encode, toy_encode_text, EmbeddingBatch,
    EncodableItem, LossConfig, Vector,
};
use crate::ocr::{crop_caption, group_words, parse_elements_json, parse_tesseract_tsv, OcrDocument};
use crate::render::{layout, to_svg, SceneGraph};
use crate::rng::RngKey;
use crate::synthesis::{synthesize, SynthesisConfig};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LOSS_REPORT_FILE: &str = "loss_report.json";

/// Grad-check pass threshold used by the loss-fixture report.
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("no records produced")]
    EmptyOutput,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record_id}: file {path} {problem}")]
    Corrupt { record_id: String, path: String, problem: String },
    #[error("manifest line {line}: {source}")]
    Manifest {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("loss fixtures: {0}")]
    Loss(String),
}

impl PipelineError {
    /// Process exit code: 1 usage, 2 empty output, 3 I/O or data failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::EmptyOutput => 2,
            PipelineError::Io { .. }
            | PipelineError::Corrupt { .. }
            | PipelineError::Manifest { .. }
            | PipelineError::Loss(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pseudo,
    Gran,
    CropCaptions,
    LossFixtures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub svg: bool,
    pub codes: bool,
    pub captions: bool,
    pub hard_sets: bool,
    pub loss_fixtures: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags { svg: true, codes: true, captions: true, hard_sets: true, loss_fixtures: false }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub synthesis: SynthesisConfig,
    pub hard: HardSampleConfig,
    pub loss: LossConfig,
    pub emit: EmitFlags,
    /// Vertical tolerance for OCR word grouping, in pixels.
    pub y_tolerance: f64,
    /// Toy encoder dimension for loss fixtures.
    pub encode_dim: usize,
    /// Records per batch in the loss-fixture report.
    pub batch_size: usize,
}

impl PipelineConfig {
    pub fn new(mode: Mode, inputs: Vec<PathBuf>, out_dir: PathBuf, seed: u64) -> Self {
        PipelineConfig {
            mode,
            inputs,
            out_dir,
            seed,
            synthesis: SynthesisConfig { seed, ..SynthesisConfig::default() },
            hard: HardSampleConfig::default(),
            loss: LossConfig::default(),
            emit: EmitFlags::default(),
            y_tolerance: 10.0,
            encode_dim: 64,
            batch_size: 4,
        }
    }
}

/// Serialized provenance entry for one hard-sample member.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProvenanceRecord {
    pub kind: String,
    pub index: usize,
    pub key: String,
    pub detail: String,
}

impl From<&EditRecord> for ProvenanceRecord {
    fn from(r: &EditRecord) -> Self {
        ProvenanceRecord {
            kind: r.kind.as_str().to_string(),
            index: r.index,
            key: r.key.to_hex(),
            detail: r.detail.clone(),
        }
    }
}

/// One line of the JSONL manifest. Paths are relative to the manifest's
/// directory; `files` maps each referenced path to its SHA-256 digest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub record_id: String,
    pub source_id: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg_path: Option<String>,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pos_image_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neg_image_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pos_captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neg_captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<ProvenanceRecord>,
    /// Root stream key of the record's hard-sample generation, hex-encoded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_key: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        let mut records = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(line)
                .map_err(|source| PipelineError::Manifest { line: idx + 1, source })?;
            records.push(record);
        }
        Ok(Manifest { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("manifest record serializes"));
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| PipelineError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, bytes).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn log_warn(message: &str) {
    eprintln!("[warn] {message}");
}

fn log_info(message: &str) {
    eprintln!("[info] {message}");
}

/// Expand input paths: directories are scanned (sorted) for files with one
/// of the accepted extensions, plain files are taken as-is when they match.
fn collect_inputs(inputs: &[PathBuf], extensions: &[&str]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for input in inputs {
        let meta = fs::metadata(input)
            .map_err(|source| PipelineError::Io { path: input.clone(), source })?;
        if meta.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|source| PipelineError::Io { path: input.clone(), source })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| has_extension(p, extensions))
                .collect();
            entries.sort();
            files.extend(entries);
        } else if has_extension(input, extensions) {
            files.push(input.clone());
        } else {
            log_warn(&format!(
                "skipping {} (expected one of: {})",
                input.display(),
                extensions.join(", ")
            ));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn has_extension(path: &Path, extensions: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| extensions.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn source_id_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_ocr_document(path: &Path) -> Result<OcrDocument, String> {
    let raw = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let source_id = source_id_of(path);
    let is_json = has_extension(path, &["json"]);
    if is_json {
        parse_elements_json(&raw, &source_id).map_err(|e| e.to_string())
    } else {
        parse_tesseract_tsv(&raw, &source_id).map_err(|e| e.to_string())
    }
}

struct RecordPayload {
    record: ManifestRecord,
    files: Vec<(String, Vec<u8>)>,
    stats: GenerationStats,
}

/// Build one dataset record: write-ready file payloads plus the manifest
/// line describing them.
fn build_record(
    record_id: String,
    source_id: &str,
    mode: Mode,
    graph: &DiagramGraph,
    description: &Description,
    cfg: &PipelineConfig,
    key: RngKey,
) -> Result<RecordPayload, String> {
    let code = emit_code(graph);
    let scene = layout(graph);
    let dir = format!("records/{record_id}");
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut record = ManifestRecord {
        record_id: record_id.clone(),
        source_id: source_id.to_string(),
        mode,
        code_path: None,
        svg_path: None,
        caption: if cfg.emit.captions { description.joined_text.clone() } else { String::new() },
        pos_image_paths: Vec::new(),
        neg_image_paths: Vec::new(),
        pos_captions: Vec::new(),
        neg_captions: Vec::new(),
        provenance: Vec::new(),
        rng_key: None,
        files: BTreeMap::new(),
    };
    if cfg.emit.codes {
        let path = format!("{dir}/code.mmd");
        files.push((path.clone(), code.text.clone().into_bytes()));
        record.code_path = Some(path);
    }
    if cfg.emit.svg {
        let path = format!("{dir}/image.svg");
        files.push((path.clone(), to_svg(&scene).into_bytes()));
        record.svg_path = Some(path);
    }
    let mut stats = GenerationStats::default();
    if cfg.emit.hard_sets {
        let outcome = make_hard_sample_set(graph, &scene, description, &cfg.hard, key)
            .map_err(|e| e.to_string())?;
        stats = outcome.stats;
        let set = outcome.set;
        debug_assert!(verify_hard_sample_set(&set, graph, description).is_empty());
        if cfg.emit.svg {
            for (i, scene) in set.positive_images.iter().enumerate() {
                let path = format!("{dir}/hard/pos_img_{i:02}.svg");
                files.push((path.clone(), to_svg(scene).into_bytes()));
                record.pos_image_paths.push(path);
            }
            for (i, scene) in set.negative_images.iter().enumerate() {
                let path = format!("{dir}/hard/neg_img_{i:02}.svg");
                files.push((path.clone(), to_svg(scene).into_bytes()));
                record.neg_image_paths.push(path);
            }
        }
        record.pos_captions = set.positive_captions;
        record.neg_captions = set.negative_captions;
        record.provenance = set.provenance.iter().map(ProvenanceRecord::from).collect();
        record.rng_key = Some(key.to_hex());
    }
    for (path, bytes) in &files {
        record.files.insert(path.clone(), sha256_hex(bytes));
    }
    Ok(RecordPayload { record, files, stats })
}

fn write_records(
    cfg: &PipelineConfig,
    mut payloads: Vec<RecordPayload>,
) -> Result<Manifest, PipelineError> {
    if payloads.is_empty() {
        return Err(PipelineError::EmptyOutput);
    }
    payloads.sort_by(|a, b| a.record.record_id.cmp(&b.record.record_id));
    let mut manifest = Manifest::default();
    let mut stats = GenerationStats::default();
    for payload in payloads {
        for (rel, bytes) in &payload.files {
            write_file(&cfg.out_dir.join(rel), bytes)?;
        }
        stats.resample_events += payload.stats.resample_events;
        stats.skipped += payload.stats.skipped;
        manifest.records.push(payload.record);
    }
    manifest.save(&cfg.out_dir.join(MANIFEST_FILE))?;
    log_info(&format!(
        "wrote {} records to {} (resample_events={}, skipped_members={})",
        manifest.records.len(),
        cfg.out_dir.display(),
        stats.resample_events,
        stats.skipped
    ));
    Ok(manifest)
}

/// Pseudo mode: OCR documents in, synthesized pseudo diagrams with codes,
/// captions, SVGs, and hard sample sets out.
pub fn run_pseudo(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.synthesis.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
    let files = collect_inputs(&cfg.inputs, &["tsv", "json"])?;
    let root = RngKey::from_seed(cfg.seed);
    let payloads: Vec<RecordPayload> = files
        .par_iter()
        .enumerate()
        .flat_map(|(image_index, path)| {
            let doc = match load_ocr_document(path) {
                Ok(doc) => group_words(&doc, cfg.y_tolerance),
                Err(err) => {
                    log_warn(&format!("{}: {err}", path.display()));
                    return Vec::new();
                }
            };
            let items = match synthesize(&doc, &cfg.synthesis, image_index) {
                Ok(items) => items,
                Err(err) => {
                    log_warn(&format!("{}: {err}", path.display()));
                    return Vec::new();
                }
            };
            items
                .iter()
                .enumerate()
                .filter_map(|(j, item)| {
                    let record_id = format!("{}-d{j:03}", doc.source_id);
                    let key = root.child_str("record", &record_id);
                    match build_record(
                        record_id.clone(),
                        &doc.source_id,
                        Mode::Pseudo,
                        &item.graph,
                        &item.description,
                        cfg,
                        key,
                    ) {
                        Ok(payload) => Some(payload),
                        Err(err) => {
                            log_warn(&format!("{record_id}: {err}"));
                            None
                        }
                    }
                })
                .collect()
        })
        .collect();
    write_records(cfg, payloads)
}

/// Gran mode: diagram codes in, all weakly connected 3-node sub-diagrams
/// out, each rendered and captioned like a pseudo record.
pub fn run_gran(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let files = collect_inputs(&cfg.inputs, &["mmd"])?;
    let root = RngKey::from_seed(cfg.seed);
    let payloads: Vec<RecordPayload> = files
        .par_iter()
        .flat_map(|path| {
            let source_id = source_id_of(path);
            let raw = match fs::read_to_string(path) {
                Ok(raw) => raw,
                Err(err) => {
                    log_warn(&format!("{}: {err}", path.display()));
                    return Vec::new();
                }
            };
            let outcome = match parse_code(&raw) {
                Ok(outcome) => outcome,
                Err(err) => {
                    log_warn(&format!("{}: {err}", path.display()));
                    return Vec::new();
                }
            };
            let violations = outcome.graph.validate();
            if !violations.is_empty() {
                log_warn(&format!(
                    "{}: invalid diagram: {}",
                    path.display(),
                    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
                ));
                return Vec::new();
            }
            let triples = match weakly_connected_triples(&outcome.graph) {
                Ok(triples) => triples,
                Err(err) => {
                    log_warn(&format!("{}: {err}", path.display()));
                    return Vec::new();
                }
            };
            triples
                .iter()
                .enumerate()
                .filter_map(|(k, triple)| {
                    let record_id = format!("{source_id}-t{k:03}");
                    let key = root.child_str("record", &record_id);
                    let description = describe(triple);
                    match build_record(
                        record_id.clone(),
                        &source_id,
                        Mode::Gran,
                        triple,
                        &description,
                        cfg,
                        key,
                    ) {
                        Ok(payload) => Some(payload),
                        Err(err) => {
                            log_warn(&format!("{record_id}: {err}"));
                            None
                        }
                    }
                })
                .collect()
        })
        .collect();
    write_records(cfg, payloads)
}

/// Crop-captions mode: one record per OCR document whose caption is the
/// plain concatenation of its words. No synthesis, no files beyond the
/// manifest.
pub fn run_crop_captions(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let files = collect_inputs(&cfg.inputs, &["tsv", "json"])?;
    let mut payloads = Vec::new();
    for path in &files {
        let doc = match load_ocr_document(path) {
            Ok(doc) => doc,
            Err(err) => {
                log_warn(&format!("{}: {err}", path.display()));
                continue;
            }
        };
        let caption = match crop_caption(&doc) {
            Ok(caption) => caption,
            Err(err) => {
                log_warn(&format!("{}: {err}", path.display()));
                continue;
            }
        };
        payloads.push(RecordPayload {
            record: ManifestRecord {
                record_id: doc.source_id.clone(),
                source_id: doc.source_id.clone(),
                mode: Mode::CropCaptions,
                code_path: None,
                svg_path: None,
                caption,
                pos_image_paths: Vec::new(),
                neg_image_paths: Vec::new(),
                pos_captions: Vec::new(),
                neg_captions: Vec::new(),
                provenance: Vec::new(),
                rng_key: None,
                files: BTreeMap::new(),
            },
            files: Vec::new(),
            stats: GenerationStats::default(),
        });
    }
    write_records(cfg, payloads)
}

// ---------------------------------------------------------------------------
// Loss fixtures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossBatchReport {
    pub record_ids: Vec<String>,
    pub info_nce: f64,
    pub sc_loss: f64,
    pub total_loss: f64,
    pub grad_max_rel_error: f64,
    pub grad_entries_checked: usize,
    pub grad_entries_skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossReport {
    pub batches: Vec<LossBatchReport>,
    pub all_pass: bool,
}

struct EncodedRecord {
    record_id: String,
    image: Vector,
    text: Vector,
    pos_image: Vec<Vector>,
    pos_text: Vec<Vector>,
    neg_image: Vec<Vector>,
    neg_text: Vec<Vector>,
}

fn verify_digest(
    base: &Path,
    record: &ManifestRecord,
    rel: &str,
) -> Result<Vec<u8>, PipelineError> {
    let path = base.join(rel);
    let bytes = fs::read(&path).map_err(|_| PipelineError::Corrupt {
        record_id: record.record_id.clone(),
        path: rel.to_string(),
        problem: "is missing".to_string(),
    })?;
    let expected = record.files.get(rel).ok_or_else(|| PipelineError::Corrupt {
        record_id: record.record_id.clone(),
        path: rel.to_string(),
        problem: "has no recorded digest".to_string(),
    })?;
    let actual = sha256_hex(&bytes);
    if &actual != expected {
        return Err(PipelineError::Corrupt {
            record_id: record.record_id.clone(),
            path: rel.to_string(),
            problem: format!("digest mismatch (expected {expected}, found {actual})"),
        });
    }
    Ok(bytes)
}

/// Rebuild a record's hard scenes from its code and stored stream key, then
/// encode everything with the toy encoder. The regenerated SVGs are checked
/// against the recorded digests, which catches both corrupted files and a
/// hard-sample config that differs from the generating run.
fn encode_record(
    base: &Path,
    record: &ManifestRecord,
    cfg: &PipelineConfig,
) -> Result<EncodedRecord, PipelineError> {
    let corrupt = |path: &str, problem: String| PipelineError::Corrupt {
        record_id: record.record_id.clone(),
        path: path.to_string(),
        problem,
    };
    let code_rel = record
        .code_path
        .as_deref()
        .ok_or_else(|| corrupt("code.mmd", "not emitted (run with codes enabled)".to_string()))?;
    let code_bytes = verify_digest(base, record, code_rel)?;
    let code_text = String::from_utf8(code_bytes)
        .map_err(|_| corrupt(code_rel, "is not UTF-8".to_string()))?;
    let graph = parse_code(&code_text)
        .map_err(|e| corrupt(code_rel, format!("does not parse: {e}")))?
        .graph;
    let description = describe(&graph);
    let scene = layout(&graph);
    if let Some(svg_rel) = record.svg_path.as_deref() {
        let recorded = verify_digest(base, record, svg_rel)?;
        if recorded != to_svg(&scene).into_bytes() {
            return Err(corrupt(svg_rel, "does not match the re-rendered scene".to_string()));
        }
    }
    let key = record
        .rng_key
        .as_deref()
        .and_then(RngKey::from_hex)
        .ok_or_else(|| corrupt("rng_key", "missing or malformed".to_string()))?;
    let outcome = make_hard_sample_set(&graph, &scene, &description, &cfg.hard, key)
        .map_err(|e| corrupt("hard samples", format!("replay failed: {e}")))?;
    let set = outcome.set;
    for (rel, scene) in record
        .pos_image_paths
        .iter()
        .zip(&set.positive_images)
        .chain(record.neg_image_paths.iter().zip(&set.negative_images))
    {
        let recorded = verify_digest(base, record, rel)?;
        if recorded != to_svg(scene).into_bytes() {
            return Err(corrupt(
                rel,
                "does not match the replayed scene (was the run configured differently?)"
                    .to_string(),
            ));
        }
    }

    let dim = cfg.encode_dim;
    let encode_scenes = |scenes: &[SceneGraph]| -> Result<Vec<Vector>, PipelineError> {
        scenes
            .iter()
            .map(|s| {
                toy_encode(EncodableItem::Scene(s), dim)
                    .map_err(|e| PipelineError::Loss(e.to_string()))
            })
            .collect()
    };
    let encode_texts = |texts: &[String]| -> Result<Vec<Vector>, PipelineError> {
        texts
            .iter()
            .map(|t| toy_encode_text(t, dim).map_err(|e| PipelineError::Loss(e.to_string())))
            .collect()
    };
    Ok(EncodedRecord {
        record_id: record.record_id.clone(),
        image: toy_encode(EncodableItem::Scene(&scene), dim)
            .map_err(|e| PipelineError::Loss(e.to_string()))?,
        text: toy_encode_text(&description.joined_text, dim)
            .map_err(|e| PipelineError::Loss(e.to_string()))?,
        pos_image: encode_scenes(&set.positive_images)?,
        pos_text: encode_texts(&set.positive_captions)?,
        neg_image: encode_scenes(&set.negative_images)?,
        neg_text: encode_texts(&set.negative_captions)?,
    })
}

/// Loss-fixtures mode: encode every manifest record with the toy encoder,
/// assemble embedding batches, evaluate all losses plus the gradient check,
/// and write a pass/fail report.
pub fn run_loss_fixtures(
    manifest_path: &Path,
    cfg: &PipelineConfig,
) -> Result<LossReport, PipelineError> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let eligible: Vec<&ManifestRecord> =
        manifest.records.iter().filter(|r| r.rng_key.is_some()).collect();
    if eligible.len() < 2 {
        return Err(PipelineError::Loss(format!(
            "need at least 2 records with hard sets, found {}",
            eligible.len()
        )));
    }
    let encoded: Vec<EncodedRecord> = eligible
        .iter()
        .map(|record| encode_record(&base, record, cfg))
        .collect::<Result<_, _>>()?;

    let mut report = LossReport { batches: Vec::new(), all_pass: true };
    for chunk in encoded.chunks(cfg.batch_size.max(2)) {
        if chunk.len() < 2 {
            log_warn(&format!(
                "dropping trailing batch of {} record(s); batches need at least 2",
                chunk.len()
            ));
            continue;
        }
        let batch = EmbeddingBatch {
            image_features: chunk.iter().map(|r| r.image.clone()).collect(),
            text_features: chunk.iter().map(|r| r.text.clone()).collect(),
            pos_image: chunk.iter().map(|r| r.pos_image.clone()).collect(),
            pos_text: chunk.iter().map(|r| r.pos_text.clone()).collect(),
            neg_image: chunk.iter().map(|r| r.neg_image.clone()).collect(),
            neg_text: chunk.iter().map(|r| r.neg_text.clone()).collect(),
        };
        let to_loss_err = |e: crate::loss::LossError| PipelineError::Loss(e.to_string());
        let nce = info_nce(&batch, &cfg.loss).map_err(to_loss_err)?;
        let sc = sc_loss(&batch, &cfg.loss).map_err(to_loss_err)?;
        let total = total_loss(&batch, &cfg.loss).map_err(to_loss_err)?;
        let grad = grad_check(&batch, &cfg.loss, GRAD_EPSILON).map_err(to_loss_err)?;
        let pass = nce.is_finite()
            && sc.is_finite()
            && total.is_finite()
            && nce >= 0.0
            && sc >= 0.0
            && total >= 0.0
            && grad.max_rel_error < GRAD_TOLERANCE;
        report.all_pass &= pass;
        report.batches.push(LossBatchReport {
            record_ids: chunk.iter().map(|r| r.record_id.clone()).collect(),
            info_nce: nce,
            sc_loss: sc,
            total_loss: total,
            grad_max_rel_error: grad.max_rel_error,
            grad_entries_checked: grad.entries_checked,
            grad_entries_skipped: grad.entries_skipped,
            pass,
        });
    }
    if report.batches.is_empty() {
        return Err(PipelineError::EmptyOutput);
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&cfg.out_dir.join(LOSS_REPORT_FILE), json.as_bytes())?;
    Ok(report)
}

/// Print the loss report's per-batch lines to stdout.
pub fn print_loss_report(report: &LossReport) {
    for (i, batch) in report.batches.iter().enumerate() {
        println!(
            "batch {i}: records={} info_nce={:.6} sc_loss={:.6} total={:.6} grad_err={:.3e} {}",
            batch.record_ids.len(),
            batch.info_nce,
            batch.sc_loss,
            batch.total_loss,
            batch.grad_max_rel_error,
            if batch.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("loss_fixtures: {}", if report.all_pass { "PASS" } else { "FAIL" });
}

/// Dispatch on the configured mode. Loss-fixtures mode expects the inputs
/// to name one existing manifest file.
pub fn run(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    match cfg.mode {
        Mode::Pseudo | Mode::Gran => {
            if cfg.mode == Mode::Pseudo {
                run_pseudo(cfg)?;
            } else {
                run_gran(cfg)?;
            }
            if cfg.emit.loss_fixtures {
                let report = run_loss_fixtures(&cfg.out_dir.join(MANIFEST_FILE), cfg)?;
                print_loss_report(&report);
            }
            Ok(())
        }
        Mode::CropCaptions => run_crop_captions(cfg).map(|_| ()),
        Mode::LossFixtures => {
            let [manifest_path] = cfg.inputs.as_slice() else {
                return Err(PipelineError::Usage(
                    "loss-fixtures mode takes exactly one input: the manifest path".to_string(),
                ));
            };
            let report = run_loss_fixtures(manifest_path, cfg)?;
            print_loss_report(&report);
            if report.all_pass {
                Ok(())
            } else {
                Err(PipelineError::EmptyOutput)
            }
        }
    }
}
