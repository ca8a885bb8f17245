//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with its measurements (run with `--nocapture` to see
//! them). Tolerances and time budgets are pinned here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use flowsynth::describe::describe;
use flowsynth::dsl::{emit_code, parse_code, parse_code_bytes};
use flowsynth::graph::{is_isomorphic, DiagramGraph, Edge, FlowDirection, Node};
use flowsynth::hard_samples::{make_hard_sample_set, HardSampleConfig};
use flowsynth::loss::{
    grad_check, info_nce, sc_loss, total_loss, EmbeddingBatch, LossConfig, Vector,
};
use flowsynth::ocr::{OcrDocument, TextElement};
use flowsynth::pipeline::{run_gran, run_pseudo, Mode, PipelineConfig};
use flowsynth::render::{layout, scene_to_graph};
use flowsynth::rng::RngKey;
use flowsynth::synthesis::{select_combinations, synthesize, SynthesisConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pass(number: u32, name: &str, detail: String) {
    println!("acceptance {number:02} ({name}): PASS [{detail}]");
}

/// Random valid graph: 2..=6 nodes, labels over a charset that exercises
/// escaping, random duplicate-free edge set with no self-loops.
fn random_graph(rng: &mut ChaCha8Rng) -> DiagramGraph {
    const CHARS: &[char] = &[
        'a', 'b', 'Z', '0', '9', ' ', '?', '[', ']', '{', '}', '\\', '-', '>', ':', '.', '*',
        'é', '話',
    ];
    let n = rng.random_range(2..=6usize);
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let len = rng.random_range(1..=12usize);
            let label: String = (0..len)
                .map(|_| CHARS[rng.random_range(0..CHARS.len())])
                .collect();
            let label = if label.trim().is_empty() { "x".to_string() } else { label };
            Node::new(format!("n{}", i + 1), label)
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    // Random subset in random order.
    for i in (1..pairs.len()).rev() {
        let j = rng.random_range(0..=i);
        pairs.swap(i, j);
    }
    let keep = rng.random_range(0..=pairs.len());
    let edges = pairs[..keep]
        .iter()
        .map(|&(i, j)| Edge::new(format!("n{}", i + 1), format!("n{}", j + 1)))
        .collect();
    let direction =
        if rng.random_bool(0.5) { FlowDirection::TopDown } else { FlowDirection::BottomUp };
    DiagramGraph::new(nodes, edges, direction)
}

#[test]
fn criterion_01_dsl_round_trip() {
    let start = Instant::now();
    let mut rng = RngKey::from_seed(101).child("roundtrip", 0).rng();
    for case in 0..1000 {
        let g = random_graph(&mut rng);
        assert!(g.is_valid(), "case {case} generated an invalid graph");
        let code = emit_code(&g);
        let outcome = parse_code(&code.text).unwrap_or_else(|e| {
            panic!("case {case}: {e}\ncode:\n{}", code.text);
        });
        assert_eq!(outcome.graph, g, "case {case} round-trip mismatch\ncode:\n{}", code.text);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    pass(1, "dsl round trip", format!("1000 graphs, {elapsed:?}"));
}

#[test]
fn criterion_02_combination_selection_oracle() {
    let mut rng = RngKey::from_seed(102).child("combos", 0).rng();
    let mut agreements = 0;
    for case in 0..100 {
        let count = rng.random_range(3..=10usize);
        let elements: Vec<TextElement> = (0..count)
            .map(|i| {
                TextElement::new(
                    format!("w{i}"),
                    rng.random_range(0.0..800.0),
                    rng.random_range(0.0..600.0),
                    1.0,
                )
            })
            .collect();
        let doc = OcrDocument {
            source_id: format!("case{case}"),
            elements,
            image_width: None,
            image_height: None,
        };
        let cfg = SynthesisConfig { node_size: 3, sampling_size: 5, max_diagrams: 1, seed: 0 };
        let got = select_combinations(&doc, &cfg).unwrap();

        // Exhaustive oracle: plain triple loops over indices.
        let mut oracle: Vec<(f64, [usize; 3])> = Vec::new();
        for i in 0..count {
            for j in (i + 1)..count {
                for k in (j + 1)..count {
                    let d = |a: usize, b: usize| {
                        let (ea, eb) = (&doc.elements[a], &doc.elements[b]);
                        ((ea.x - eb.x).powi(2) + (ea.y - eb.y).powi(2)).sqrt()
                    };
                    oracle.push((d(i, j) + d(i, k) + d(j, k), [i, j, k]));
                }
            }
        }
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        oracle.truncate(5);

        assert_eq!(got.len(), oracle.len(), "case {case}");
        for (g, (dist, indices)) in got.iter().zip(&oracle) {
            assert_eq!(g.indices.as_slice(), indices.as_slice(), "case {case} order");
            assert!((g.dist - dist).abs() < 1e-9, "case {case} dist");
        }
        agreements += 1;
    }
    pass(2, "combination selection oracle", format!("{agreements}/100 documents agree"));
}

#[test]
fn criterion_03_description_fidelity() {
    let chain = DiagramGraph::new(
        vec![Node::new("n1", "Start"), Node::new("n2", "Is valid?"), Node::new("n3", "End")],
        vec![Edge::new("n1", "n2"), Edge::new("n2", "n3")],
        FlowDirection::TopDown,
    );
    let d = describe(&chain);
    assert_eq!(
        d.sentences,
        vec![
            "From Start: Proceed to Is valid?".to_string(),
            "From Is valid?: If **Yes**, proceed to End".to_string(),
        ]
    );

    let branches = DiagramGraph::new(
        vec![
            Node::new("n1", "Ready?"),
            Node::new("n2", "A"),
            Node::new("n3", "B"),
            Node::new("n4", "C"),
        ],
        vec![Edge::new("n1", "n2"), Edge::new("n1", "n3"), Edge::new("n1", "n4")],
        FlowDirection::TopDown,
    );
    let d = describe(&branches);
    assert_eq!(
        d.sentences,
        vec![
            "From Ready?: If **Yes**, proceed to A".to_string(),
            "From Ready?: If **No**, proceed to B".to_string(),
            "From Ready?: If ****, proceed to C".to_string(),
        ]
    );
    pass(3, "description fidelity", "2 hand-traced fixtures byte-exact".to_string());
}

#[test]
fn criterion_04_hard_sample_guarantees() {
    let cfg = HardSampleConfig::default();
    assert_eq!(cfg.neg_images, 8);
    assert_eq!(cfg.neg_captions, 6);

    let mut members = 0u64;
    let mut resamples = 0u64;
    let mut rng = RngKey::from_seed(104).child("docs", 0).rng();
    for generation in 0..500u64 {
        // A fresh random document and synthesized diagram per generation.
        let elements: Vec<TextElement> = (0..4)
            .map(|i| {
                TextElement::new(
                    ["Begin", "Check step?", "Retry", "Finish"][i],
                    rng.random_range(0.0..400.0),
                    rng.random_range(0.0..400.0),
                    1.0,
                )
            })
            .collect();
        let doc = OcrDocument {
            source_id: format!("gen{generation}"),
            elements,
            image_width: None,
            image_height: None,
        };
        let synth = SynthesisConfig {
            sampling_size: 1,
            max_diagrams: 1,
            seed: generation,
            ..SynthesisConfig::default()
        };
        let item = synthesize(&doc, &synth, 0).unwrap().remove(0);
        let scene = layout(&item.graph);
        let key = RngKey::from_seed(generation).child("accept", 4);
        let outcome =
            make_hard_sample_set(&item.graph, &scene, &item.description, &cfg, key).unwrap();
        let set = outcome.set;

        assert_eq!(set.positive_images.len(), cfg.pos_images, "no skipped members allowed");
        assert_eq!(set.negative_images.len(), cfg.neg_images);
        assert_eq!(set.negative_captions.len(), cfg.neg_captions);
        members += (set.positive_images.len()
            + set.negative_images.len()
            + set.positive_captions.len()
            + set.negative_captions.len()) as u64;
        resamples += u64::from(outcome.stats.resample_events);
        assert_eq!(outcome.stats.skipped, 0);

        // Isomorphism oracle over every member.
        for scene in &set.positive_images {
            assert!(
                is_isomorphic(&scene_to_graph(scene), &item.graph),
                "generation {generation}: positive image broke structure"
            );
        }
        for scene in &set.negative_images {
            assert!(
                !is_isomorphic(&scene_to_graph(scene), &item.graph),
                "generation {generation}: negative image kept structure"
            );
        }
        let code = emit_code(&item.graph).text;
        for caption in &set.negative_captions {
            assert_ne!(caption, &code);
            assert_ne!(caption, &item.description.joined_text);
            if let Ok(parsed) = parse_code(caption) {
                assert!(
                    !is_isomorphic(&parsed.graph, &item.graph),
                    "generation {generation}: negative caption parses isomorphic"
                );
            }
        }
    }
    let rate = resamples as f64 / members as f64;
    assert!(rate <= 0.01, "resample rate {rate:.4} exceeds 1% ({resamples}/{members})");
    pass(
        4,
        "hard sample guarantees",
        format!("500 generations, {members} members, resample rate {rate:.5}"),
    );
}

#[test]
fn criterion_05_loss_identities() {
    // InfoNCE on an all-identical batch of 4 is exactly ln 4.
    let row = vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5];
    let identical = EmbeddingBatch::pairs_only(vec![row.clone(); 4], vec![row; 4]);
    let cfg = LossConfig::default();
    let nce = info_nce(&identical, &cfg).unwrap();
    assert!((nce - 4.0f64.ln()).abs() < 1e-12, "info_nce {nce} != ln 4");

    // S^p = S^n makes the structure-aware term exactly ln 2.
    let unit = |axis: usize| {
        let mut v = vec![0.0; 8];
        v[axis] = 1.0;
        v
    };
    let mut balanced = EmbeddingBatch::pairs_only(vec![unit(0), unit(1)], vec![unit(2), unit(3)]);
    for i in 0..2 {
        balanced.pos_image[i] = vec![unit(4)];
        balanced.pos_text[i] = vec![unit(5)];
        balanced.neg_image[i] = vec![unit(4)];
        balanced.neg_text[i] = vec![unit(5)];
    }
    let sc = sc_loss(&balanced, &cfg).unwrap();
    assert!((sc - 2.0f64.ln()).abs() < 1e-12, "sc_loss {sc} != ln 2");

    // Total with lambda_sc = 0.1 equals the hand-combined value.
    let nce_b = info_nce(&balanced, &cfg).unwrap();
    let total = total_loss(&balanced, &cfg).unwrap();
    assert!((total - (nce_b + 0.1 * sc)).abs() < 1e-12);
    pass(5, "loss identities", format!("ln4={nce:.12}, ln2={sc:.12}, total combined"));
}

fn random_batch(seed: u64, n: usize, dim: usize, samples: usize) -> EmbeddingBatch {
    fn vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
    fn rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vector> {
        (0..n).map(|_| vector(rng, dim)).collect()
    }
    fn lists(rng: &mut ChaCha8Rng, n: usize, dim: usize, samples: usize) -> Vec<Vec<Vector>> {
        (0..n).map(|_| rows(rng, samples, dim)).collect()
    }
    let mut rng = RngKey::from_seed(seed).child("batch", 1).rng();
    EmbeddingBatch {
        image_features: rows(&mut rng, n, dim),
        text_features: rows(&mut rng, n, dim),
        pos_image: lists(&mut rng, n, dim, samples),
        pos_text: lists(&mut rng, n, dim, samples),
        neg_image: lists(&mut rng, n, dim, samples),
        neg_text: lists(&mut rng, n, dim, samples),
    }
}

#[test]
fn criterion_06_gradient_check() {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let batch = random_batch(600 + seed, 4, 8, 2);
        let report = grad_check(&batch, &cfg, 1e-5).unwrap();
        worst = worst.max(report.max_rel_error);
        assert!(
            report.max_rel_error < 1e-4,
            "seed {seed}: max relative error {}",
            report.max_rel_error
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(6, "gradient check", format!("20 batches, worst {worst:.3e}, {elapsed:?}"));
}

#[test]
fn criterion_07_scale_and_sign_invariance() {
    let cfg = LossConfig::default();
    let base = random_batch(700, 4, 8, 2);
    let reference = (
        info_nce(&base, &cfg).unwrap(),
        sc_loss(&base, &cfg).unwrap(),
        total_loss(&base, &cfg).unwrap(),
    );
    let mut worst: f64 = 0.0;
    for variant in 0..6 {
        let mut batch = base.clone();
        let apply = |v: &mut Vector, scale: f64| {
            for x in v.iter_mut() {
                *x *= scale;
            }
        };
        match variant {
            0 => apply(&mut batch.image_features[0], 3.7),
            1 => apply(&mut batch.text_features[3], 3.7),
            2 => apply(&mut batch.pos_image[1][0], 3.7),
            3 => apply(&mut batch.image_features[2], -1.0),
            4 => apply(&mut batch.neg_text[0][1], -1.0),
            5 => apply(&mut batch.pos_text[2][1], -3.7),
            _ => unreachable!(),
        }
        let values = (
            info_nce(&batch, &cfg).unwrap(),
            sc_loss(&batch, &cfg).unwrap(),
            total_loss(&batch, &cfg).unwrap(),
        );
        for (a, b) in [
            (values.0, reference.0),
            (values.1, reference.1),
            (values.2, reference.2),
        ] {
            worst = worst.max((a - b).abs());
            assert!((a - b).abs() <= 1e-12, "variant {variant}: {a} vs {b}");
        }
    }
    pass(7, "scale and sign invariance", format!("6 variants, worst drift {worst:.3e}"));
}

#[test]
fn criterion_08_end_to_end_determinism() {
    fn digest_tree(dir: &Path) -> BTreeMap<String, String> {
        use sha2::Digest;
        fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
            let mut entries: Vec<PathBuf> =
                fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for path in entries {
                if path.is_dir() {
                    walk(base, &path, out);
                } else {
                    let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, hex::encode(sha2::Sha256::digest(fs::read(&path).unwrap())));
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(dir, dir, &mut out);
        out
    }

    let mut digests = Vec::new();
    let mut record_count = 0;
    for run in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::new(
            Mode::Pseudo,
            vec![fixture("docs3")],
            tmp.path().to_path_buf(),
            42,
        );
        let start = Instant::now();
        let manifest = run_pseudo(&cfg).unwrap();
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 30.0, "run {run} took {elapsed:?}, budget 30 s");
        record_count = manifest.records.len();
        digests.push(digest_tree(tmp.path()));
    }
    assert!(record_count > 0);
    assert_eq!(digests[0], digests[1], "output trees differ between runs");
    pass(
        8,
        "end-to-end determinism",
        format!("{record_count} records, {} files identical", digests[0].len()),
    );
}

#[test]
fn criterion_09_granulation_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::new(
        Mode::Gran,
        vec![fixture("star4.mmd")],
        tmp.path().to_path_buf(),
        0,
    );
    let manifest = run_gran(&cfg).unwrap();
    assert_eq!(manifest.records.len(), 3, "star-4 must granulate into exactly 3 triples");
    pass(9, "granulation count", "4-node star -> 3 records".to_string());
}

#[test]
fn criterion_10_parser_fuzz() {
    let start = Instant::now();
    let mut rng = RngKey::from_seed(110).child("fuzz", 0).rng();
    let template = b"flowchart TD\nn1[Start]\nn2{Is valid?}\nn1 --> n2";
    let mut parsed_ok = 0u32;
    for case in 0..100_000u32 {
        let bytes: Vec<u8> = if case % 10 < 7 {
            let len = rng.random_range(0..80usize);
            (0..len).map(|_| rng.random::<u8>()).collect()
        } else {
            // Mutated mostly-valid input for deeper parser coverage.
            let mut bytes = template.to_vec();
            for _ in 0..rng.random_range(1..6usize) {
                let pos = rng.random_range(0..bytes.len());
                bytes[pos] = rng.random::<u8>();
            }
            bytes
        };
        if parse_code_bytes(&bytes).is_ok() {
            parsed_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    pass(
        10,
        "parser fuzz",
        format!("100000 inputs, {parsed_ok} parsed, 0 crashes, {elapsed:?}"),
    );
}
