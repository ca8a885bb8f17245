//! Rule-based hard positive/negative sample generation.
//!
//! Hard positive images keep the diagram's structure but change its look
//! (flipped flow direction, moved nodes). Hard negative images look similar
//! but change the structure (reversed or removed arrows, then the positive
//! rule on top). The diagram code is the hard positive caption; hard
//! negative captions swap node labels inside the description or the code.
//!
//! Every member is generated from its own [`RngKey`], recorded in the
//! provenance so that any member can be regenerated exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::describe::Description;
use crate::dsl::emit_code;
use crate::graph::{is_isomorphic, DiagramGraph, Node};
use crate::render::{apply_scene_edit, scene_to_graph, RenderError, SceneEdit, SceneGraph};
use crate::rng::RngKey;

/// Per-member retry budget when an edit sequence fails (overlaps) or a
/// sampled perturbation turns out degenerate.
const MEMBER_ATTEMPTS: u64 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HardSampleError {
    #[error("graph has no edges to perturb")]
    NoEdges,
    #[error("graph has fewer than 2 distinct node labels")]
    TooFewLabels,
    #[error("negative sample degenerate after {attempts} attempts: {reason}")]
    DegenerateNegative { attempts: u64, reason: String },
    #[error("no label swap can produce a distinguishable caption")]
    IndistinguishableSwap,
    #[error("scene edit failed after {attempts} attempts: {source}")]
    Edit {
        attempts: u64,
        #[source]
        source: RenderError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSampleConfig {
    pub pos_images: usize,
    pub neg_images: usize,
    pub pos_captions: usize,
    pub neg_captions: usize,
    /// Per-axis node displacement range for the move edit, in scene units.
    pub move_range: f64,
    /// Arrow count up to which negative perturbations are enumerated
    /// exhaustively and sampled uniformly from the valid set (3^m fate
    /// vectors); beyond it, draw-and-check sampling is used.
    pub enumeration_limit: usize,
}

impl Default for HardSampleConfig {
    fn default() -> Self {
        HardSampleConfig {
            pos_images: 2,
            neg_images: 8,
            pos_captions: 2,
            neg_captions: 6,
            move_range: 40.0,
            enumeration_limit: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    PositiveImage,
    NegativeImage,
    PositiveCaption,
    NegativeCaption,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::PositiveImage => "positive_image",
            SampleKind::NegativeImage => "negative_image",
            SampleKind::PositiveCaption => "positive_caption",
            SampleKind::NegativeCaption => "negative_caption",
        }
    }
}

/// Provenance for one emitted member: which rule ran, where the member sits
/// in its list, the stream key that regenerates it, and a human-readable
/// summary of the applied edits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditRecord {
    pub kind: SampleKind,
    pub index: usize,
    pub key: RngKey,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerationStats {
    /// Fresh-randomness retries after a failed attempt.
    pub resample_events: u32,
    /// Members dropped after exhausting the retry budget (positives only).
    pub skipped: u32,
}

impl GenerationStats {
    fn absorb(&mut self, other: GenerationStats) {
        self.resample_events += other.resample_events;
        self.skipped += other.skipped;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSampleSet {
    pub positive_images: Vec<SceneGraph>,
    pub negative_images: Vec<SceneGraph>,
    pub positive_captions: Vec<String>,
    pub negative_captions: Vec<String>,
    pub provenance: Vec<EditRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSampleOutcome {
    pub set: HardSampleSet,
    pub stats: GenerationStats,
}

// ---------------------------------------------------------------------------
// Positive images
// ---------------------------------------------------------------------------

/// One application of the hard-positive rule: flip the flow direction with
/// probability 1/2 and move a uniformly chosen node subset with per-axis
/// deltas uniform in the move range. When `force_edit` is set and neither
/// coin fires, the flip is forced so the sample is never a no-op.
fn positive_rule(
    scene: &SceneGraph,
    rng: &mut ChaCha8Rng,
    cfg: &HardSampleConfig,
    force_edit: bool,
) -> Result<(SceneGraph, String), RenderError> {
    let mut flip = rng.random_bool(0.5);
    let mut do_move = rng.random_bool(0.5);
    if force_edit && !flip && !do_move {
        flip = true;
    }
    if scene.shapes.is_empty() {
        do_move = false;
    }
    let mut out = scene.clone();
    let mut parts: Vec<String> = Vec::new();
    if flip {
        out = apply_scene_edit(&out, &SceneEdit::FlipDirection)?;
        parts.push("flip".to_string());
    }
    if do_move {
        let k = out.shapes.len().min(20);
        let mask = rng.random_range(1..(1u64 << k));
        let ids: Vec<String> = (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| out.shapes[i].node_id.clone())
            .collect();
        for id in &ids {
            let dx = rng.random_range(-cfg.move_range..=cfg.move_range);
            let dy = rng.random_range(-cfg.move_range..=cfg.move_range);
            out = apply_scene_edit(&out, &SceneEdit::MoveNode { node_id: id.clone(), dx, dy })?;
        }
        parts.push(format!("move({})", ids.join(",")));
    }
    Ok((out, parts.join("+")))
}

/// Generate one hard positive image from its member key, retrying with
/// fresh randomness when a move cannot satisfy the overlap margin.
pub fn positive_image_sample(
    g: &DiagramGraph,
    scene: &SceneGraph,
    key: RngKey,
    cfg: &HardSampleConfig,
) -> Result<(SceneGraph, String, u32), HardSampleError> {
    let mut resamples = 0;
    let mut last_err = RenderError::UnknownId { id: String::new() };
    for attempt in 0..MEMBER_ATTEMPTS {
        let mut rng = key.child("attempt", attempt).rng();
        match positive_rule(scene, &mut rng, cfg, true) {
            Ok((edited, detail)) => {
                assert_eq!(
                    scene_to_graph(&edited).edge_set(),
                    g.edge_set(),
                    "hard positive edit altered the edge set"
                );
                return Ok((edited, detail, resamples));
            }
            Err(err) => {
                resamples += 1;
                last_err = err;
            }
        }
    }
    Err(HardSampleError::Edit { attempts: MEMBER_ATTEMPTS, source: last_err })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardImages {
    pub scenes: Vec<SceneGraph>,
    pub records: Vec<EditRecord>,
    pub stats: GenerationStats,
}

/// `n` hard positive images. Members that exhaust their retry budget are
/// skipped and counted rather than failing the whole set.
pub fn hard_positive_images(
    g: &DiagramGraph,
    scene: &SceneGraph,
    n: usize,
    key: RngKey,
    cfg: &HardSampleConfig,
) -> HardImages {
    let mut out = HardImages {
        scenes: Vec::with_capacity(n),
        records: Vec::with_capacity(n),
        stats: GenerationStats::default(),
    };
    for index in 0..n {
        let member_key = key.child("pos_img", index as u64);
        match positive_image_sample(g, scene, member_key, cfg) {
            Ok((edited, detail, resamples)) => {
                out.stats.resample_events += resamples;
                out.records.push(EditRecord {
                    kind: SampleKind::PositiveImage,
                    index: out.scenes.len(),
                    key: member_key,
                    detail,
                });
                out.scenes.push(edited);
            }
            Err(_) => {
                out.stats.resample_events += MEMBER_ATTEMPTS as u32;
                out.stats.skipped += 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Negative images
// ---------------------------------------------------------------------------

/// A structural perturbation: which arrows to reverse and which to remove,
/// by index into the base scene's arrow list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbation {
    pub reversed: Vec<usize>,
    pub removed: Vec<usize>,
}

impl Perturbation {
    fn detail(&self) -> String {
        let fmt = |v: &[usize]| {
            v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        };
        match (self.reversed.is_empty(), self.removed.is_empty()) {
            (false, false) => format!("reverse({})+remove({})", fmt(&self.reversed), fmt(&self.removed)),
            (false, true) => format!("reverse({})", fmt(&self.reversed)),
            (true, false) => format!("remove({})", fmt(&self.removed)),
            (true, true) => "noop".to_string(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fate {
    Keep,
    Reverse,
    Remove,
}

fn perturbation_from_fates(fates: &[Fate]) -> Perturbation {
    Perturbation {
        reversed: fates
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == Fate::Reverse)
            .map(|(i, _)| i)
            .collect(),
        removed: fates
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == Fate::Remove)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// A fate vector is valid when it touches at least one arrow, keeps at
/// least one arrow, produces no duplicate arrows, and changes the edge set.
fn fates_valid(fates: &[Fate], pairs: &[(String, String)]) -> bool {
    if fates.iter().all(|f| *f == Fate::Keep) {
        return false;
    }
    if fates.iter().all(|f| *f == Fate::Remove) {
        return false;
    }
    let mut result: Vec<(&str, &str)> = Vec::with_capacity(pairs.len());
    for (fate, (from, to)) in fates.iter().zip(pairs) {
        match fate {
            Fate::Keep => result.push((from, to)),
            Fate::Reverse => result.push((to, from)),
            Fate::Remove => {}
        }
    }
    let mut dedup = result.clone();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != result.len() {
        return false;
    }
    let mut original: Vec<(&str, &str)> =
        pairs.iter().map(|(f, t)| (f.as_str(), t.as_str())).collect();
    original.sort_unstable();
    dedup != original
}

/// All valid perturbations of `pairs`, in fate-vector lexicographic order
/// (keep < reverse < remove per arrow).
pub fn valid_perturbations(pairs: &[(String, String)]) -> Vec<Perturbation> {
    let m = pairs.len();
    let mut out = Vec::new();
    let mut fates = vec![Fate::Keep; m];
    loop {
        if fates_valid(&fates, pairs) {
            out.push(perturbation_from_fates(&fates));
        }
        // Increment the base-3 fate counter.
        let mut pos = m;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            fates[pos] = match fates[pos] {
                Fate::Keep => Fate::Reverse,
                Fate::Reverse => Fate::Remove,
                Fate::Remove => {
                    fates[pos] = Fate::Keep;
                    continue;
                }
            };
            break;
        }
    }
}

/// Apply a perturbation to a scene: reversals first, then removals in
/// descending index order so earlier indices stay valid.
pub fn apply_perturbation(
    scene: &SceneGraph,
    perturbation: &Perturbation,
) -> Result<SceneGraph, RenderError> {
    let mut out = scene.clone();
    for &index in &perturbation.reversed {
        out = apply_scene_edit(&out, &SceneEdit::ReverseArrow(index))?;
    }
    let mut removals = perturbation.removed.clone();
    removals.sort_unstable_by(|a, b| b.cmp(a));
    for index in removals {
        out = apply_scene_edit(&out, &SceneEdit::RemoveArrow(index))?;
    }
    Ok(out)
}

fn draw_fates(rng: &mut ChaCha8Rng, m: usize) -> Vec<Fate> {
    (0..m)
        .map(|_| match rng.random_range(0..4u8) {
            0 | 1 => Fate::Keep,
            2 => Fate::Reverse,
            _ => Fate::Remove,
        })
        .collect()
}

/// Generate one hard negative image from its member key.
///
/// With few arrows the valid perturbation space is enumerated and sampled
/// uniformly, so degenerate draws (for example reversing both arrows of a
/// 2-cycle, which restores the original edge set) cannot occur; the
/// draw-and-check fallback counts them as resample events instead.
pub fn negative_image_sample(
    g: &DiagramGraph,
    scene: &SceneGraph,
    key: RngKey,
    cfg: &HardSampleConfig,
) -> Result<(SceneGraph, String, u32), HardSampleError> {
    let m = scene.arrows.len();
    if m == 0 {
        return Err(HardSampleError::NoEdges);
    }
    let pairs: Vec<(String, String)> =
        scene.arrows.iter().map(|a| (a.from_id.clone(), a.to_id.clone())).collect();
    let enumerated = if m <= cfg.enumeration_limit {
        let all = valid_perturbations(&pairs);
        if all.is_empty() {
            return Err(HardSampleError::DegenerateNegative {
                attempts: 0,
                reason: "no valid perturbation exists".to_string(),
            });
        }
        Some(all)
    } else {
        None
    };

    let original_edges = g.edge_set();
    let mut resamples = 0;
    let mut last_reason = String::new();
    for attempt in 0..MEMBER_ATTEMPTS {
        let mut rng = key.child("attempt", attempt).rng();
        let perturbation = match &enumerated {
            Some(all) => all[rng.random_range(0..all.len())].clone(),
            None => {
                let fates = draw_fates(&mut rng, m);
                if !fates_valid(&fates, &pairs) {
                    resamples += 1;
                    last_reason = "sampled perturbation is degenerate".to_string();
                    continue;
                }
                perturbation_from_fates(&fates)
            }
        };
        let perturbed = match apply_perturbation(scene, &perturbation) {
            Ok(s) => s,
            Err(err) => {
                resamples += 1;
                last_reason = err.to_string();
                continue;
            }
        };
        // The hard-positive rule runs on top of the structural edit.
        match positive_rule(&perturbed, &mut rng, cfg, false) {
            Ok((edited, pos_detail)) => {
                let edited_edges = scene_to_graph(&edited).edge_set();
                assert_ne!(
                    edited_edges, original_edges,
                    "hard negative edit failed to change the edge set"
                );
                let detail = if pos_detail.is_empty() {
                    perturbation.detail()
                } else {
                    format!("{}+{}", perturbation.detail(), pos_detail)
                };
                return Ok((edited, detail, resamples));
            }
            Err(err) => {
                resamples += 1;
                last_reason = err.to_string();
            }
        }
    }
    Err(HardSampleError::DegenerateNegative { attempts: MEMBER_ATTEMPTS, reason: last_reason })
}

/// `n` hard negative images; fails if any member exhausts its retries.
pub fn hard_negative_images(
    g: &DiagramGraph,
    scene: &SceneGraph,
    n: usize,
    key: RngKey,
    cfg: &HardSampleConfig,
) -> Result<HardImages, HardSampleError> {
    let mut out = HardImages {
        scenes: Vec::with_capacity(n),
        records: Vec::with_capacity(n),
        stats: GenerationStats::default(),
    };
    for index in 0..n {
        let member_key = key.child("neg_img", index as u64);
        let (edited, detail, resamples) = negative_image_sample(g, scene, member_key, cfg)?;
        out.stats.resample_events += resamples;
        out.records.push(EditRecord {
            kind: SampleKind::NegativeImage,
            index,
            key: member_key,
            detail,
        });
        out.scenes.push(edited);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

/// The hard positive caption is the diagram code, verbatim.
pub fn hard_positive_caption(g: &DiagramGraph) -> String {
    emit_code(g).text
}

/// Swap whole-label occurrences of `a` and `b` in `text` simultaneously.
/// A match counts only when not flanked by alphanumeric characters, so
/// labels sharing text with unrelated words are left alone. Longer labels
/// match first.
pub(crate) fn whole_label_swap(text: &str, a: &str, b: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let (first, second) = if a.chars().count() >= b.chars().count() { (a, b) } else { (b, a) };
    let first_chars: Vec<char> = first.chars().collect();
    let second_chars: Vec<char> = second.chars().collect();
    let boundary_ok = |chars: &[char], start: usize, len: usize| {
        let before_ok = start == 0 || !chars[start - 1].is_alphanumeric();
        let after_ok = start + len >= chars.len() || !chars[start + len].is_alphanumeric();
        before_ok && after_ok
    };
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let try_match = |needle: &[char]| -> bool {
            i + needle.len() <= chars.len()
                && chars[i..i + needle.len()] == *needle
                && boundary_ok(&chars, i, needle.len())
        };
        if try_match(&first_chars) {
            out.push_str(second);
            i += first_chars.len();
        } else if try_match(&second_chars) {
            out.push_str(first);
            i += second_chars.len();
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Graph with the labels of two nodes exchanged; kinds follow the labels so
/// the result stays valid (brackets travel with the '?' suffix).
fn swap_node_labels(g: &DiagramGraph, i: usize, j: usize) -> DiagramGraph {
    let mut nodes = g.nodes.clone();
    let label_i = nodes[i].label.clone();
    let label_j = nodes[j].label.clone();
    nodes[i] = Node::new(nodes[i].id.clone(), label_j);
    nodes[j] = Node::new(nodes[j].id.clone(), label_i);
    DiagramGraph::new(nodes, g.edges.clone(), g.direction)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum CaptionSwap {
    /// Swap a pair of label values in the description text.
    Description { a: String, b: String, result: String },
    /// Swap the labels of a node pair inside the code.
    Code { i: usize, j: usize, result: String },
}

impl CaptionSwap {
    fn result(&self) -> &str {
        match self {
            CaptionSwap::Description { result, .. } | CaptionSwap::Code { result, .. } => result,
        }
    }

    fn detail(&self) -> String {
        match self {
            CaptionSwap::Description { a, b, .. } => format!("desc-swap({a}|{b})"),
            CaptionSwap::Code { i, j, .. } => format!("code-swap(#{i}|#{j})"),
        }
    }
}

/// Enumerate every label swap that yields a usable negative caption: the
/// result must differ from both the true caption and the true code, and a
/// code-typed swap must change the graph up to isomorphism.
fn caption_swap_candidates(
    g: &DiagramGraph,
    d: &Description,
) -> Result<(Vec<CaptionSwap>, Vec<CaptionSwap>), HardSampleError> {
    let code_text = hard_positive_caption(g);
    let mut labels: Vec<&str> = g.nodes.iter().map(|n| n.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(HardSampleError::TooFewLabels);
    }

    let mut description_swaps = Vec::new();
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let result = whole_label_swap(&d.joined_text, labels[i], labels[j]);
            if result != d.joined_text && result != code_text {
                description_swaps.push(CaptionSwap::Description {
                    a: labels[i].to_string(),
                    b: labels[j].to_string(),
                    result,
                });
            }
        }
    }

    let mut code_swaps = Vec::new();
    for i in 0..g.nodes.len() {
        for j in (i + 1)..g.nodes.len() {
            if g.nodes[i].label == g.nodes[j].label {
                continue;
            }
            let swapped = swap_node_labels(g, i, j);
            if is_isomorphic(&swapped, g) {
                continue;
            }
            let result = emit_code(&swapped).text;
            if result != code_text && result != d.joined_text {
                code_swaps.push(CaptionSwap::Code { i, j, result });
            }
        }
    }
    Ok((description_swaps, code_swaps))
}

/// `n` hard negative captions: each is a description-text label swap or a
/// code label swap, chosen by fair coin, drawn uniformly from the valid
/// candidates of the chosen kind.
pub fn hard_negative_captions(
    g: &DiagramGraph,
    d: &Description,
    n: usize,
    key: RngKey,
) -> Result<(Vec<String>, Vec<EditRecord>), HardSampleError> {
    let (description_swaps, code_swaps) = caption_swap_candidates(g, d)?;
    if description_swaps.is_empty() && code_swaps.is_empty() {
        return Err(HardSampleError::IndistinguishableSwap);
    }
    let mut captions = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for index in 0..n {
        let member_key = key.child("neg_cap", index as u64);
        let mut rng = member_key.rng();
        let prefer_description = rng.random_bool(0.5);
        let pool = match (prefer_description, description_swaps.is_empty(), code_swaps.is_empty()) {
            (true, false, _) => &description_swaps,
            (true, true, _) => &code_swaps,
            (false, _, false) => &code_swaps,
            (false, _, true) => &description_swaps,
        };
        let choice = &pool[rng.random_range(0..pool.len())];
        records.push(EditRecord {
            kind: SampleKind::NegativeCaption,
            index,
            key: member_key,
            detail: choice.detail(),
        });
        captions.push(choice.result().to_string());
    }
    Ok((captions, records))
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Build the full hard sample set for one diagram. Counts come from the
/// config; the default sizes are 8 negative images, 6 negative captions,
/// and 2 of each positive kind.
pub fn make_hard_sample_set(
    g: &DiagramGraph,
    scene: &SceneGraph,
    d: &Description,
    cfg: &HardSampleConfig,
    key: RngKey,
) -> Result<HardSampleOutcome, HardSampleError> {
    let mut stats = GenerationStats::default();
    let mut provenance = Vec::new();

    let positives = hard_positive_images(g, scene, cfg.pos_images, key, cfg);
    stats.absorb(positives.stats);
    provenance.extend(positives.records);

    let negatives = hard_negative_images(g, scene, cfg.neg_images, key, cfg)?;
    stats.absorb(negatives.stats);
    provenance.extend(negatives.records);

    let code = hard_positive_caption(g);
    let positive_captions = vec![code; cfg.pos_captions];
    for index in 0..cfg.pos_captions {
        provenance.push(EditRecord {
            kind: SampleKind::PositiveCaption,
            index,
            key: key.child("pos_cap", index as u64),
            detail: "code".to_string(),
        });
    }

    let (negative_captions, caption_records) =
        hard_negative_captions(g, d, cfg.neg_captions, key)?;
    provenance.extend(caption_records);

    Ok(HardSampleOutcome {
        set: HardSampleSet {
            positive_images: positives.scenes,
            negative_images: negatives.scenes,
            positive_captions,
            negative_captions,
            provenance,
        },
        stats,
    })
}

/// Regenerate one image member from its provenance record. Captions are
/// regenerated through [`hard_negative_captions`] with the set key instead.
pub fn replay_image_record(
    record: &EditRecord,
    g: &DiagramGraph,
    scene: &SceneGraph,
    cfg: &HardSampleConfig,
) -> Result<SceneGraph, HardSampleError> {
    match record.kind {
        SampleKind::PositiveImage => {
            positive_image_sample(g, scene, record.key, cfg).map(|(s, _, _)| s)
        }
        SampleKind::NegativeImage => {
            negative_image_sample(g, scene, record.key, cfg).map(|(s, _, _)| s)
        }
        _ => panic!("replay_image_record called on a caption record"),
    }
}

/// Check every set invariant against the source diagram; returns the list
/// of violations (empty when the set is sound).
pub fn verify_hard_sample_set(
    set: &HardSampleSet,
    g: &DiagramGraph,
    d: &Description,
) -> Vec<String> {
    let mut out = Vec::new();
    let original = g.edge_set();
    let code = hard_positive_caption(g);
    for (i, scene) in set.positive_images.iter().enumerate() {
        let recovered = scene_to_graph(scene);
        if recovered.edge_set() != original {
            out.push(format!("positive image {i} changed the edge set"));
        }
        if !is_isomorphic(&recovered, g) {
            out.push(format!("positive image {i} is not isomorphic to the original"));
        }
    }
    for (i, scene) in set.negative_images.iter().enumerate() {
        let recovered = scene_to_graph(scene);
        if recovered.edge_set() == original {
            out.push(format!("negative image {i} kept the edge set"));
        }
        if is_isomorphic(&recovered, g) {
            out.push(format!("negative image {i} is isomorphic to the original"));
        }
    }
    for (i, caption) in set.positive_captions.iter().enumerate() {
        if caption != &code {
            out.push(format!("positive caption {i} is not the diagram code"));
        }
    }
    for (i, caption) in set.negative_captions.iter().enumerate() {
        if caption == &code || caption == &d.joined_text {
            out.push(format!("negative caption {i} equals a true caption"));
        }
        if let Ok(outcome) = crate::dsl::parse_code(caption) {
            if is_isomorphic(&outcome.graph, g) {
                out.push(format!("negative caption {i} parses to an isomorphic graph"));
            }
        }
    }
    out
}
