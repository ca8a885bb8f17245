//! Analytic gradients for the training objective, verified against central
//! finite differences.
//!
//! For a pair `(a, b)` with raw cosine `c = <a,b>/(|a||b|)` and similarity
//! `s = |c|`, the gradient is
//!
//! ```text
//! ds/da = sign(c) * b / (|a||b|)  -  s * a / |a|^2
//! ```
//!
//! and symmetrically for `b`. The absolute value makes `s` non-smooth at
//! `c = 0`; pairs near that point are flagged so the finite-difference
//! comparison can exclude the vectors involved.

use std::collections::BTreeSet;

use super::{
    dot, norm, total_loss, EmbeddingBatch, LossConfig, LossError, Vector,
};

/// Address of one feature vector inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    Image(usize),
    Text(usize),
    PosImage(usize, usize),
    PosText(usize, usize),
    NegImage(usize, usize),
    NegText(usize, usize),
}

/// Gradient of the total loss with the same shape as the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub image_features: Vec<Vector>,
    pub text_features: Vec<Vector>,
    pub pos_image: Vec<Vec<Vector>>,
    pub pos_text: Vec<Vec<Vector>>,
    pub neg_image: Vec<Vec<Vector>>,
    pub neg_text: Vec<Vec<Vector>>,
}

impl BatchGrad {
    fn zeros_like(batch: &EmbeddingBatch) -> Self {
        let d = batch.dim();
        let zero_rows = |rows: &Vec<Vector>| vec![vec![0.0; d]; rows.len()];
        let zero_lists = |lists: &Vec<Vec<Vector>>| {
            lists.iter().map(|row| vec![vec![0.0; d]; row.len()]).collect()
        };
        BatchGrad {
            image_features: zero_rows(&batch.image_features),
            text_features: zero_rows(&batch.text_features),
            pos_image: zero_lists(&batch.pos_image),
            pos_text: zero_lists(&batch.pos_text),
            neg_image: zero_lists(&batch.neg_image),
            neg_text: zero_lists(&batch.neg_text),
        }
    }

    pub fn vector(&self, slot: Slot) -> &Vector {
        match slot {
            Slot::Image(i) => &self.image_features[i],
            Slot::Text(i) => &self.text_features[i],
            Slot::PosImage(i, k) => &self.pos_image[i][k],
            Slot::PosText(i, k) => &self.pos_text[i][k],
            Slot::NegImage(i, k) => &self.neg_image[i][k],
            Slot::NegText(i, k) => &self.neg_text[i][k],
        }
    }

    fn vector_mut(&mut self, slot: Slot) -> &mut Vector {
        match slot {
            Slot::Image(i) => &mut self.image_features[i],
            Slot::Text(i) => &mut self.text_features[i],
            Slot::PosImage(i, k) => &mut self.pos_image[i][k],
            Slot::PosText(i, k) => &mut self.pos_text[i][k],
            Slot::NegImage(i, k) => &mut self.neg_image[i][k],
            Slot::NegText(i, k) => &mut self.neg_text[i][k],
        }
    }
}

fn batch_vector(batch: &EmbeddingBatch, slot: Slot) -> &Vector {
    match slot {
        Slot::Image(i) => &batch.image_features[i],
        Slot::Text(i) => &batch.text_features[i],
        Slot::PosImage(i, k) => &batch.pos_image[i][k],
        Slot::PosText(i, k) => &batch.pos_text[i][k],
        Slot::NegImage(i, k) => &batch.neg_image[i][k],
        Slot::NegText(i, k) => &batch.neg_text[i][k],
    }
}

fn batch_vector_mut(batch: &mut EmbeddingBatch, slot: Slot) -> &mut Vector {
    match slot {
        Slot::Image(i) => &mut batch.image_features[i],
        Slot::Text(i) => &mut batch.text_features[i],
        Slot::PosImage(i, k) => &mut batch.pos_image[i][k],
        Slot::PosText(i, k) => &mut batch.pos_text[i][k],
        Slot::NegImage(i, k) => &mut batch.neg_image[i][k],
        Slot::NegText(i, k) => &mut batch.neg_text[i][k],
    }
}

fn all_slots(batch: &EmbeddingBatch) -> Vec<Slot> {
    let n = batch.rows();
    let mut out = Vec::new();
    for i in 0..n {
        out.push(Slot::Image(i));
        out.push(Slot::Text(i));
        for k in 0..batch.pos_image[i].len() {
            out.push(Slot::PosImage(i, k));
        }
        for k in 0..batch.pos_text[i].len() {
            out.push(Slot::PosText(i, k));
        }
        for k in 0..batch.neg_image[i].len() {
            out.push(Slot::NegImage(i, k));
        }
        for k in 0..batch.neg_text[i].len() {
            out.push(Slot::NegText(i, k));
        }
    }
    out
}

/// Evaluate one pair and push `weight * ds/d{a,b}` into the gradient.
/// Records the pair's vectors as tainted when |cos| falls below
/// `taint_threshold`.
struct PairEngine<'a> {
    batch: &'a EmbeddingBatch,
    grad: BatchGrad,
    tainted: BTreeSet<Slot>,
    taint_threshold: f64,
}

impl<'a> PairEngine<'a> {
    fn new(batch: &'a EmbeddingBatch, taint_threshold: f64) -> Self {
        PairEngine {
            batch,
            grad: BatchGrad::zeros_like(batch),
            tainted: BTreeSet::new(),
            taint_threshold,
        }
    }

    /// Absolute cosine of the pair, with taint tracking.
    fn similarity(&mut self, a: Slot, b: Slot) -> Result<f64, LossError> {
        let va = batch_vector(self.batch, a);
        let vb = batch_vector(self.batch, b);
        let (na, nb) = (norm(va), norm(vb));
        if na == 0.0 || nb == 0.0 {
            return Err(LossError::ZeroVector);
        }
        let c = dot(va, vb) / (na * nb);
        if c.abs() < self.taint_threshold {
            self.tainted.insert(a);
            self.tainted.insert(b);
        }
        Ok(c.abs())
    }

    /// Accumulate `weight * d|cos(a,b)| / d{a,b}`.
    fn accumulate(&mut self, a: Slot, b: Slot, weight: f64) {
        let va = batch_vector(self.batch, a).clone();
        let vb = batch_vector(self.batch, b).clone();
        let (na, nb) = (norm(&va), norm(&vb));
        let c = dot(&va, &vb) / (na * nb);
        let sign = if c >= 0.0 { 1.0 } else { -1.0 };
        let s = c.abs();
        {
            let ga = self.grad.vector_mut(a);
            for d in 0..va.len() {
                ga[d] += weight * (sign * vb[d] / (na * nb) - s * va[d] / (na * na));
            }
        }
        {
            let gb = self.grad.vector_mut(b);
            for d in 0..vb.len() {
                gb[d] += weight * (sign * va[d] / (na * nb) - s * vb[d] / (nb * nb));
            }
        }
    }
}

/// Total loss together with its analytic gradient with respect to every
/// feature entry, plus the set of vectors involved in a near-orthogonal
/// pair (where the absolute value is not differentiable).
pub fn total_loss_with_grad(
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
    taint_threshold: f64,
) -> Result<(f64, BatchGrad, BTreeSet<Slot>), LossError> {
    cfg.validate()?;
    batch.validate()?;
    let n = batch.rows();
    if n < 2 {
        return Err(LossError::BatchTooSmall { found: n });
    }
    let tau = cfg.temperature;
    let mut engine = PairEngine::new(batch, taint_threshold);

    // InfoNCE: z[i][j] = s(v_i, t_j) / tau.
    let mut z = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            z[i][j] = engine.similarity(Slot::Image(i), Slot::Text(j))? / tau;
        }
    }
    let softmax = |values: &[f64]| -> Vec<f64> {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    };
    let mut loss = 0.0;
    let mut row_probs = Vec::with_capacity(n);
    let mut col_probs = Vec::with_capacity(n);
    for i in 0..n {
        let p = softmax(&z[i]);
        loss += -p[i].ln();
        row_probs.push(p);
    }
    for j in 0..n {
        let column: Vec<f64> = (0..n).map(|i| z[i][j]).collect();
        let p = softmax(&column);
        loss += -p[j].ln();
        col_probs.push(p);
    }
    loss /= 2.0 * n as f64;
    let half_n = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 2.0 } else { 0.0 };
            let g = half_n * (row_probs[i][j] + col_probs[j][i] - delta);
            if g != 0.0 {
                engine.accumulate(Slot::Image(i), Slot::Text(j), g / tau);
            }
        }
    }

    // Structure-aware term.
    if cfg.lambda_sc != 0.0 {
        let scale = cfg.lambda_sc / n as f64;
        let mut sc_total = 0.0;
        for i in 0..n {
            if batch.pos_image[i].is_empty() || batch.pos_text[i].is_empty() {
                return Err(LossError::NoSamples { row: i, list: "positive" });
            }
            if batch.neg_image[i].is_empty() || batch.neg_text[i].is_empty() {
                return Err(LossError::NoSamples { row: i, list: "negative" });
            }
            // Term layout: (anchor slot, sample slot constructor, count).
            let pos_terms: [(Slot, fn(usize, usize) -> Slot, usize); 4] = [
                (Slot::Image(i), Slot::PosImage, batch.pos_image[i].len()),
                (Slot::Text(i), Slot::PosText, batch.pos_text[i].len()),
                (Slot::Image(i), Slot::PosText, batch.pos_text[i].len()),
                (Slot::Text(i), Slot::PosImage, batch.pos_image[i].len()),
            ];
            let neg_terms: [(Slot, fn(usize, usize) -> Slot, usize); 4] = [
                (Slot::Image(i), Slot::NegImage, batch.neg_image[i].len()),
                (Slot::Text(i), Slot::NegText, batch.neg_text[i].len()),
                (Slot::Image(i), Slot::NegText, batch.neg_text[i].len()),
                (Slot::Text(i), Slot::NegImage, batch.neg_image[i].len()),
            ];
            let eval_terms = |engine: &mut PairEngine,
                                  terms: &[(Slot, fn(usize, usize) -> Slot, usize); 4]|
             -> Result<(f64, Vec<Vec<f64>>), LossError> {
                let mut aggregate = 0.0;
                let mut exps = Vec::with_capacity(4);
                for (anchor, make_slot, count) in terms {
                    let mut term_exps = Vec::with_capacity(*count);
                    for k in 0..*count {
                        let s = engine.similarity(*anchor, make_slot(i, k))?;
                        term_exps.push((s / tau).exp());
                    }
                    aggregate += term_exps.iter().sum::<f64>() / *count as f64;
                    exps.push(term_exps);
                }
                Ok((aggregate, exps))
            };
            let (sp, pos_exps) = eval_terms(&mut engine, &pos_terms)?;
            let (sn, neg_exps) = eval_terms(&mut engine, &neg_terms)?;
            sc_total += -(sp / (sp + sn)).ln();

            let d_sp = scale * (1.0 / (sp + sn) - 1.0 / sp);
            let d_sn = scale * (1.0 / (sp + sn));
            for (terms, exps, upstream) in
                [(&pos_terms, &pos_exps, d_sp), (&neg_terms, &neg_exps, d_sn)]
            {
                for ((anchor, make_slot, count), term_exps) in terms.iter().zip(exps) {
                    for (k, e) in term_exps.iter().enumerate() {
                        let weight = upstream * e / (tau * *count as f64);
                        engine.accumulate(*anchor, make_slot(i, k), weight);
                    }
                }
            }
        }
        loss += cfg.lambda_sc * sc_total / n as f64;
    }

    let PairEngine { grad, tainted, .. } = engine;
    Ok((loss, grad, tainted))
}

/// Outcome of the finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max of |analytic - central difference| / max(|analytic|, |fd|, 0.01)
    /// over all checked entries.
    pub max_rel_error: f64,
    pub entries_checked: usize,
    /// Entries excluded because their vector took part in a pair whose
    /// |cos| fell below 10 * epsilon.
    pub entries_skipped: usize,
    pub tainted_vectors: usize,
}

/// Compare the analytic gradient of the total loss against central finite
/// differences with step `epsilon`.
pub fn grad_check(
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
    epsilon: f64,
) -> Result<GradCheckReport, LossError> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(LossError::InvalidConfig(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (loss, grad, tainted) = total_loss_with_grad(batch, cfg, 10.0 * epsilon)?;
    let direct = total_loss(batch, cfg)?;
    debug_assert!(
        (loss - direct).abs() <= 1e-9 * (1.0 + loss.abs()),
        "loss paths disagree: {loss} vs {direct}"
    );

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        entries_skipped: 0,
        tainted_vectors: tainted.len(),
    };
    let dim = batch.dim();
    for slot in all_slots(batch) {
        if tainted.contains(&slot) {
            report.entries_skipped += dim;
            continue;
        }
        for d in 0..dim {
            let mut plus = batch.clone();
            batch_vector_mut(&mut plus, slot)[d] += epsilon;
            let mut minus = batch.clone();
            batch_vector_mut(&mut minus, slot)[d] -= epsilon;
            let fd = (total_loss(&plus, cfg)? - total_loss(&minus, cfg)?) / (2.0 * epsilon);
            let analytic = grad.vector(slot)[d];
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.entries_checked += 1;
        }
    }
    Ok(report)
}
