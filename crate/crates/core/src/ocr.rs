//! OCR ingestion: positioned text elements from Tesseract TSV output (or a
//! plain JSON fixture schema), word-into-phrase grouping, and the
//! concatenated caption used by the crop-style baseline.

use serde::Deserialize;
use thiserror::Error;

/// Nominal glyph advance in pixels, used to estimate a word's width from its
/// character count (element positions are box centers; widths are not kept).
const EST_CHAR_WIDTH: f64 = 7.0;

/// Horizontal merge threshold is this multiple of the median estimated width.
const GAP_FACTOR: f64 = 1.5;

const TSV_HEADER: [&str; 12] = [
    "level", "page_num", "block_num", "par_num", "line_num", "word_num", "left", "top", "width",
    "height", "conf", "text",
];

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("malformed TSV header: expected the 12 standard tesseract columns, got {found:?}")]
    MalformedHeader { found: String },
    #[error("no usable text elements in document {source_id}")]
    EmptyDocument { source_id: String },
    #[error("invalid element at index {index}: {reason}")]
    InvalidElement { index: usize, reason: String },
    #[error("invalid JSON fixture: {0}")]
    Json(#[from] serde_json::Error),
}

/// One OCR token: its text and the pixel-space center of its bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct TextElement {
    pub text: String,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl TextElement {
    pub fn new(text: impl Into<String>, x: f64, y: f64, confidence: f64) -> Self {
        TextElement { text: text.into(), x, y, confidence }
    }

    fn check(&self, index: usize) -> Result<(), OcrError> {
        if self.text.trim().is_empty() {
            return Err(OcrError::InvalidElement { index, reason: "empty text".into() });
        }
        if !(self.x.is_finite() && self.y.is_finite() && self.x >= 0.0 && self.y >= 0.0) {
            return Err(OcrError::InvalidElement {
                index,
                reason: format!("position ({}, {}) not finite and non-negative", self.x, self.y),
            });
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(OcrError::InvalidElement {
                index,
                reason: format!("confidence {} outside [0, 1]", self.confidence),
            });
        }
        Ok(())
    }

    fn estimated_width(&self) -> f64 {
        EST_CHAR_WIDTH * self.text.chars().count() as f64
    }
}

/// All retained text elements of one source image, in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrDocument {
    pub source_id: String,
    pub elements: Vec<TextElement>,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
}

#[derive(Deserialize)]
struct JsonElement {
    text: String,
    x: f64,
    y: f64,
    confidence: Option<f64>,
}

/// Parse Tesseract `--tsv` output. Keeps word rows (level 5) with
/// non-negative confidence and non-empty text; the element position is the
/// box center. Rows with an unexpected field count are skipped.
pub fn parse_tesseract_tsv(raw: &str, source_id: &str) -> Result<OcrDocument, OcrError> {
    let mut lines = raw.lines();
    let header = lines.next().unwrap_or("");
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    if names != TSV_HEADER {
        return Err(OcrError::MalformedHeader { found: header.to_string() });
    }

    let mut elements = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 12 {
            continue;
        }
        let level: u32 = match fields[0].trim().parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        if level != 5 {
            continue;
        }
        let conf: f64 = match fields[10].trim().parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        if conf < 0.0 {
            continue;
        }
        let text = fields[11].trim();
        if text.is_empty() {
            continue;
        }
        let nums: Option<Vec<f64>> =
            fields[6..10].iter().map(|f| f.trim().parse::<f64>().ok()).collect();
        let [left, top, width, height] = match nums.as_deref() {
            Some([l, t, w, h]) => [*l, *t, *w, *h],
            _ => continue,
        };
        let element = TextElement::new(
            text,
            left + width / 2.0,
            top + height / 2.0,
            (conf / 100.0).clamp(0.0, 1.0),
        );
        if element.check(elements.len()).is_err() {
            continue;
        }
        elements.push(element);
    }

    if elements.is_empty() {
        return Err(OcrError::EmptyDocument { source_id: source_id.to_string() });
    }
    Ok(OcrDocument { source_id: source_id.to_string(), elements, image_width: None, image_height: None })
}

/// Parse the fixture schema: a JSON array of `{text, x, y, confidence?}`.
pub fn parse_elements_json(raw: &str, source_id: &str) -> Result<OcrDocument, OcrError> {
    let rows: Vec<JsonElement> = serde_json::from_str(raw)?;
    let mut elements = Vec::with_capacity(rows.len());
    for (index, row) in rows.into_iter().enumerate() {
        let element =
            TextElement::new(row.text.trim(), row.x, row.y, row.confidence.unwrap_or(1.0));
        element.check(index)?;
        elements.push(element);
    }
    if elements.is_empty() {
        return Err(OcrError::EmptyDocument { source_id: source_id.to_string() });
    }
    Ok(OcrDocument { source_id: source_id.to_string(), elements, image_width: None, image_height: None })
}

/// Serialize back to Tesseract TSV (zero-size boxes centered on each
/// element), such that reparsing reproduces the document exactly.
pub fn to_tesseract_tsv(doc: &OcrDocument) -> String {
    let mut out = TSV_HEADER.join("\t");
    for (i, e) in doc.elements.iter().enumerate() {
        out.push('\n');
        out.push_str(&format!(
            "5\t1\t1\t1\t1\t{}\t{}\t{}\t0\t0\t{}\t{}",
            i + 1,
            e.x,
            e.y,
            e.confidence * 100.0,
            e.text
        ));
    }
    out
}

/// Merge consecutive words that sit on one visual line into phrase elements.
///
/// Two neighbours merge when their vertical centers differ by at most
/// `y_tolerance` and their horizontal center distance is at most 1.5x the
/// median estimated word width. Scans repeat until no merge applies, so the
/// result is a fixpoint: grouping an already-grouped document is a no-op.
pub fn group_words(doc: &OcrDocument, y_tolerance: f64) -> OcrDocument {
    assert!(y_tolerance >= 0.0, "y_tolerance must be non-negative");
    let mut elements = doc.elements.clone();
    loop {
        let merged = merge_pass(&elements, y_tolerance);
        if merged.len() == elements.len() {
            break;
        }
        elements = merged;
    }
    OcrDocument { elements, ..doc.clone() }
}

fn median_estimated_width(elements: &[TextElement]) -> f64 {
    let mut widths: Vec<f64> = elements.iter().map(TextElement::estimated_width).collect();
    widths.sort_by(f64::total_cmp);
    let n = widths.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        widths[n / 2]
    } else {
        (widths[n / 2 - 1] + widths[n / 2]) / 2.0
    }
}

fn merge_pass(elements: &[TextElement], y_tolerance: f64) -> Vec<TextElement> {
    let threshold = GAP_FACTOR * median_estimated_width(elements);
    let mut groups: Vec<Vec<&TextElement>> = Vec::new();
    for e in elements {
        // Adjacency is judged against the last member of the open group, so a
        // phrase can keep extending left-to-right along a line.
        let extends = groups.last().and_then(|g| g.last()).is_some_and(|last| {
            (last.y - e.y).abs() <= y_tolerance && (e.x - last.x).abs() <= threshold
        });
        if extends {
            groups.last_mut().unwrap().push(e);
        } else {
            groups.push(vec![e]);
        }
    }
    groups
        .into_iter()
        .map(|members| {
            let n = members.len() as f64;
            TextElement {
                text: members.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join(" "),
                x: members.iter().map(|m| m.x).sum::<f64>() / n,
                y: members.iter().map(|m| m.y).sum::<f64>() / n,
                confidence: members.iter().map(|m| m.confidence).fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Caption built by concatenating every element text in reading order.
pub fn crop_caption(doc: &OcrDocument) -> Result<String, OcrError> {
    if doc.elements.is_empty() {
        return Err(OcrError::EmptyDocument { source_id: doc.source_id.clone() });
    }
    Ok(doc.elements.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(elements: Vec<TextElement>) -> OcrDocument {
        OcrDocument { source_id: "t".into(), elements, image_width: None, image_height: None }
    }

    #[test]
    fn parses_single_word_row() {
        let tsv = format!(
            "{}\n5\t1\t1\t1\t1\t1\t10\t20\t30\t10\t96\tStart",
            TSV_HEADER.join("\t")
        );
        let d = parse_tesseract_tsv(&tsv, "img").unwrap();
        assert_eq!(d.elements.len(), 1);
        let e = &d.elements[0];
        assert_eq!(e.text, "Start");
        assert_eq!(e.x, 25.0);
        assert_eq!(e.y, 25.0);
        assert!((e.confidence - 0.96).abs() < 1e-12);
    }

    #[test]
    fn negative_confidence_rows_are_dropped() {
        let tsv = format!(
            "{}\n5\t1\t1\t1\t1\t1\t10\t20\t30\t10\t-1\tStart",
            TSV_HEADER.join("\t")
        );
        match parse_tesseract_tsv(&tsv, "img") {
            Err(OcrError::EmptyDocument { .. }) => {}
            other => panic!("expected EmptyDocument, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let err = parse_tesseract_tsv("level\tpage\n", "img").unwrap_err();
        assert!(matches!(err, OcrError::MalformedHeader { .. }));
    }

    #[test]
    fn non_word_levels_are_skipped() {
        let tsv = format!(
            "{h}\n1\t1\t0\t0\t0\t0\t0\t0\t100\t100\t-1\t\n4\t1\t1\t1\t1\t0\t5\t5\t90\t20\t-1\t\n5\t1\t1\t1\t1\t1\t10\t20\t30\t10\t96\tGo",
            h = TSV_HEADER.join("\t")
        );
        let d = parse_tesseract_tsv(&tsv, "img").unwrap();
        assert_eq!(d.elements.len(), 1);
        assert_eq!(d.elements[0].text, "Go");
    }

    #[test]
    fn tsv_round_trip_is_fixpoint() {
        let tsv = format!(
            "{h}\n5\t1\t1\t1\t1\t1\t10\t20\t30\t10\t96\tStart\n3\t1\t1\t1\t0\t0\t0\t0\t5\t5\t-1\t\n5\t1\t1\t1\t1\t2\t50\t21\t28\t9\t87\tnow",
            h = TSV_HEADER.join("\t")
        );
        let once = parse_tesseract_tsv(&tsv, "img").unwrap();
        let twice = parse_tesseract_tsv(&to_tesseract_tsv(&once), "img").unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn merges_words_on_one_line() {
        let d = doc(vec![
            TextElement::new("Is", 100.0, 40.0, 0.9),
            TextElement::new("valid?", 108.0, 40.0, 0.8),
        ]);
        let g = group_words(&d, 4.0);
        assert_eq!(g.elements.len(), 1);
        let e = &g.elements[0];
        assert_eq!(e.text, "Is valid?");
        assert_eq!(e.x, 104.0);
        assert_eq!(e.y, 40.0);
        assert_eq!(e.confidence, 0.8);
    }

    #[test]
    fn far_apart_lines_stay_separate() {
        let d = doc(vec![
            TextElement::new("alpha", 10.0, 10.0, 1.0),
            TextElement::new("beta", 10.0, 510.0, 1.0),
        ]);
        let g = group_words(&d, 10.0);
        assert_eq!(g.elements, d.elements);
    }

    /// Brute-force oracle: merge any qualifying pair (not just neighbours)
    /// until no pair qualifies, then compare against the scan-based grouping.
    #[test]
    fn grouping_matches_transitive_closure_oracle() {
        let words: Vec<(&str, f64, f64)> = vec![
            ("Start", 100.0, 50.0),
            ("the", 130.0, 50.0),
            ("process", 160.0, 51.0),
            ("Is", 95.0, 150.0),
            ("it", 120.0, 149.0),
            ("valid?", 150.0, 150.0),
            ("End", 110.0, 250.0),
            ("of", 135.0, 250.0),
            ("flow", 160.0, 251.0),
        ];
        let d = doc(
            words.iter().map(|(t, x, y)| TextElement::new(*t, *x, *y, 1.0)).collect(),
        );
        let tol = 4.0;
        let g = group_words(&d, tol);
        assert_eq!(g.elements.len(), 3);
        assert_eq!(g.elements[0].text, "Start the process");
        assert_eq!(g.elements[1].text, "Is it valid?");
        assert_eq!(g.elements[2].text, "End of flow");

        // Oracle: transitive closure of the pairwise merge relation over the
        // original word positions, realized as connected components.
        let oracle: Vec<String> = {
            let elems = &d.elements;
            let threshold = GAP_FACTOR * median_estimated_width(elems);
            let mut component: Vec<usize> = (0..elems.len()).collect();
            loop {
                let mut changed = false;
                for i in 0..elems.len() {
                    for j in 0..elems.len() {
                        if i != j
                            && (elems[i].y - elems[j].y).abs() <= tol
                            && (elems[j].x - elems[i].x).abs() <= threshold
                            && component[i] != component[j]
                        {
                            let merged = component[i].min(component[j]);
                            let gone = component[i].max(component[j]);
                            for c in component.iter_mut() {
                                if *c == gone {
                                    *c = merged;
                                }
                            }
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut roots: Vec<usize> = component.clone();
            roots.dedup();
            roots
                .iter()
                .map(|r| {
                    elems
                        .iter()
                        .zip(&component)
                        .filter(|(_, c)| *c == r)
                        .map(|(e, _)| e.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect()
        };
        assert_eq!(g.elements.len(), oracle.len());
        for (got, want) in g.elements.iter().zip(&oracle) {
            assert_eq!(&got.text, want);
        }
    }

    #[test]
    fn grouping_is_idempotent() {
        let d = doc(vec![
            TextElement::new("a", 0.0, 0.0, 1.0),
            TextElement::new("bb", 9.0, 1.0, 1.0),
            TextElement::new("ccc", 300.0, 0.0, 1.0),
            TextElement::new("d", 0.0, 80.0, 1.0),
        ]);
        let once = group_words(&d, 5.0);
        let twice = group_words(&once, 5.0);
        assert_eq!(once, twice);
    }

    #[test]
    fn caption_joins_in_order() {
        let d = doc(vec![
            TextElement::new("Start", 0.0, 0.0, 1.0),
            TextElement::new("Check", 0.0, 10.0, 1.0),
            TextElement::new("End", 0.0, 20.0, 1.0),
        ]);
        assert_eq!(crop_caption(&d).unwrap(), "Start Check End");
        let single = doc(vec![TextElement::new("Solo", 0.0, 0.0, 1.0)]);
        assert_eq!(crop_caption(&single).unwrap(), "Solo");
    }

    #[test]
    fn caption_length_identity() {
        let d = doc(vec![
            TextElement::new("ab", 0.0, 0.0, 1.0),
            TextElement::new("cde", 0.0, 10.0, 1.0),
            TextElement::new("f", 0.0, 20.0, 1.0),
        ]);
        let caption = crop_caption(&d).unwrap();
        let total: usize = d.elements.iter().map(|e| e.text.len()).sum();
        assert_eq!(caption.len(), total + d.elements.len() - 1);
    }

    #[test]
    fn json_fixture_parses_with_default_confidence() {
        let raw = r#"[{"text":"Go","x":1.0,"y":2.0},{"text":"Stop","x":3.0,"y":4.0,"confidence":0.5}]"#;
        let d = parse_elements_json(raw, "fx").unwrap();
        assert_eq!(d.elements[0].confidence, 1.0);
        assert_eq!(d.elements[1].confidence, 0.5);
    }

    #[test]
    fn json_fixture_rejects_bad_elements() {
        let raw = r#"[{"text":"  ","x":1.0,"y":2.0}]"#;
        assert!(matches!(
            parse_elements_json(raw, "fx").unwrap_err(),
            OcrError::InvalidElement { .. }
        ));
        let raw = r#"[{"text":"a","x":-1.0,"y":2.0}]"#;
        assert!(matches!(
            parse_elements_json(raw, "fx").unwrap_err(),
            OcrError::InvalidElement { .. }
        ));
    }
}
