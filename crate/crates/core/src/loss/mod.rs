//! Reference implementation of the structure-aware contrastive objective.
//!
//! The total loss is the symmetric InfoNCE term plus a weighted
//! structure-aware term that contrasts aggregated hard-positive similarity
//! against hard-negative similarity. All similarities are absolute cosine
//! over unit-normalized features and divided by the temperature, so every
//! loss value is invariant to scaling or negating any feature row.

mod encode;
mod grad;

pub use encode::{toy_encode, toy_encode_text, EncodableItem};
pub use grad::{grad_check, total_loss_with_grad, BatchGrad, GradCheckReport, Slot};

use thiserror::Error;

pub type Vector = Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("batch has {found} rows, InfoNCE needs at least 2")]
    BatchTooSmall { found: usize },
    #[error("row {row} has no {list} samples")]
    NoSamples { row: usize, list: &'static str },
    #[error("nothing to encode")]
    EmptyItem,
    #[error("encoding dimension {dim} is below the minimum of 8")]
    BadDimension { dim: usize },
    #[error("batch shape error: {0}")]
    Shape(String),
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

/// Unit-norm feature rows for a batch of image/caption pairs plus the
/// per-row hard-sample feature lists drawn from the generate functions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub image_features: Vec<Vector>,
    pub text_features: Vec<Vector>,
    pub pos_image: Vec<Vec<Vector>>,
    pub pos_text: Vec<Vec<Vector>>,
    pub neg_image: Vec<Vec<Vector>>,
    pub neg_text: Vec<Vec<Vector>>,
}

impl EmbeddingBatch {
    /// Batch with no hard samples attached (enough for InfoNCE).
    pub fn pairs_only(image_features: Vec<Vector>, text_features: Vec<Vector>) -> Self {
        let n = image_features.len();
        EmbeddingBatch {
            image_features,
            text_features,
            pos_image: vec![Vec::new(); n],
            pos_text: vec![Vec::new(); n],
            neg_image: vec![Vec::new(); n],
            neg_text: vec![Vec::new(); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.image_features.len()
    }

    pub fn dim(&self) -> usize {
        self.image_features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let n = self.rows();
        if self.text_features.len() != n {
            return Err(LossError::Shape(format!(
                "{} image rows vs {} text rows",
                n,
                self.text_features.len()
            )));
        }
        for (name, lists) in [
            ("pos_image", &self.pos_image),
            ("pos_text", &self.pos_text),
            ("neg_image", &self.neg_image),
            ("neg_text", &self.neg_text),
        ] {
            if lists.len() != n {
                return Err(LossError::Shape(format!(
                    "{name} has {} rows, batch has {n}",
                    lists.len()
                )));
            }
        }
        let d = self.dim();
        if d < 2 {
            return Err(LossError::Shape(format!("feature dimension {d} is below 2")));
        }
        let check = |v: &Vector| -> Result<(), LossError> {
            if v.len() != d {
                return Err(LossError::Shape(format!(
                    "vector of length {} in a batch of dimension {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LossError::Shape("non-finite feature entry".to_string()));
            }
            Ok(())
        };
        for v in self.image_features.iter().chain(&self.text_features) {
            check(v)?;
        }
        for lists in [&self.pos_image, &self.pos_text, &self.neg_image, &self.neg_text] {
            for row in lists.iter() {
                for v in row {
                    check(v)?;
                }
            }
        }
        Ok(())
    }
}

/// Loss weights and temperature. The distinct-factor term is carried for
/// completeness but pinned to zero weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_sc: f64,
    pub lambda_do: f64,
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_sc: 0.1, lambda_do: 0.0, temperature: 0.07 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LossError::InvalidConfig("temperature must be positive".into()));
        }
        if !(self.lambda_sc >= 0.0 && self.lambda_sc.is_finite()) {
            return Err(LossError::InvalidConfig("lambda_sc must be non-negative".into()));
        }
        if self.lambda_do != 0.0 {
            return Err(LossError::InvalidConfig(
                "lambda_do is fixed at 0 in this implementation".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Absolute cosine similarity: |<a, b>| / (|a| |b|), in [0, 1].
pub fn abs_cos_sim(a: &[f64], b: &[f64]) -> Result<f64, LossError> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(LossError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).abs())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE over the batch: for each retrieval direction, the
/// cross-entropy of the matched pair against all candidates, the two
/// directional means averaged.
pub fn info_nce(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    batch.validate()?;
    let n = batch.rows();
    if n < 2 {
        return Err(LossError::BatchTooSmall { found: n });
    }
    let mut z = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            z[i][j] =
                abs_cos_sim(&batch.image_features[i], &batch.text_features[j])? / cfg.temperature;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        total += log_sum_exp(&z[i]) - z[i][i];
    }
    for j in 0..n {
        let column: Vec<f64> = (0..n).map(|i| z[i][j]).collect();
        total += log_sum_exp(&column) - z[j][j];
    }
    Ok(total / (2.0 * n as f64))
}

fn mean_exp_sim(
    anchor: &Vector,
    samples: &[Vector],
    temperature: f64,
) -> Result<f64, LossError> {
    let mut sum = 0.0;
    for sample in samples {
        sum += (abs_cos_sim(anchor, sample)? / temperature).exp();
    }
    Ok(sum / samples.len() as f64)
}

fn aggregate_similarity(
    image: &Vector,
    text: &Vector,
    image_samples: &[Vector],
    text_samples: &[Vector],
    row: usize,
    list: &'static str,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    if image_samples.is_empty() || text_samples.is_empty() {
        return Err(LossError::NoSamples { row, list });
    }
    let t = cfg.temperature;
    // Four exponentiated terms: image<->sample-image, text<->sample-text,
    // and the two cross pairings; the expectation over samples is realized
    // as the arithmetic mean of each term over its list.
    Ok(mean_exp_sim(image, image_samples, t)?
        + mean_exp_sim(text, text_samples, t)?
        + mean_exp_sim(image, text_samples, t)?
        + mean_exp_sim(text, image_samples, t)?)
}

/// Aggregated hard-positive similarity for row `i` (four-term mean).
pub fn positive_similarity(
    i: usize,
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    aggregate_similarity(
        &batch.image_features[i],
        &batch.text_features[i],
        &batch.pos_image[i],
        &batch.pos_text[i],
        i,
        "positive",
        cfg,
    )
}

/// Aggregated hard-negative similarity for row `i`.
pub fn negative_similarity(
    i: usize,
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    aggregate_similarity(
        &batch.image_features[i],
        &batch.text_features[i],
        &batch.neg_image[i],
        &batch.neg_text[i],
        i,
        "negative",
        cfg,
    )
}

/// Structure-aware contrastive loss: mean over rows of
/// `-log(S^p / (S^p + S^n))`.
pub fn sc_loss(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    batch.validate()?;
    let n = batch.rows();
    let mut total = 0.0;
    for i in 0..n {
        let sp = positive_similarity(i, batch, cfg)?;
        let sn = negative_similarity(i, batch, cfg)?;
        total += -(sp / (sp + sn)).ln();
    }
    Ok(total / n as f64)
}

/// Training objective: InfoNCE plus the weighted structure-aware term.
pub fn total_loss(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<f64, LossError> {
    let base = info_nce(batch, cfg)?;
    if cfg.lambda_sc == 0.0 {
        return Ok(base);
    }
    Ok(base + cfg.lambda_sc * sc_loss(batch, cfg)?)
}


#[cfg(test)]
mod tests {
    use super::*;
    use test_support::random_batch;

    const TAU: f64 = 0.07;

    fn unit(dim: usize, axis: usize) -> Vector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    #[test]
    fn abs_cos_basics() {
        let e1 = unit(4, 0);
        let e2 = unit(4, 1);
        assert_eq!(abs_cos_sim(&e1, &e1).unwrap(), 1.0);
        assert_eq!(abs_cos_sim(&e1, &e2).unwrap(), 0.0);
        let neg: Vector = e1.iter().map(|x| -x).collect();
        assert_eq!(abs_cos_sim(&e1, &neg).unwrap(), 1.0);
        assert_eq!(abs_cos_sim(&e1, &[0.0; 4]), Err(LossError::ZeroVector));
    }

    #[test]
    fn info_nce_on_identical_batch_is_ln_n() {
        let row = vec![0.5, 0.5, 0.5, 0.5];
        let batch = EmbeddingBatch::pairs_only(vec![row.clone(); 4], vec![row; 4]);
        let cfg = LossConfig::default();
        let loss = info_nce(&batch, &cfg).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn info_nce_two_rows_closed_form() {
        let batch = EmbeddingBatch::pairs_only(
            vec![unit(4, 0), unit(4, 1)],
            vec![unit(4, 0), unit(4, 1)],
        );
        let cfg = LossConfig::default();
        let loss = info_nce(&batch, &cfg).unwrap();
        let expected = (1.0 + (-1.0 / TAU).exp()).ln();
        assert!((loss - expected).abs() < 1e-12, "got {loss}, want {expected}");
    }

    /// Oracle: direct per-row softmax formula without stabilization.
    #[test]
    fn info_nce_matches_scalar_oracle() {
        let batch = random_batch(7, 4, 8, 2);
        let cfg = LossConfig::default();
        let loss = info_nce(&batch, &cfg).unwrap();

        let n = batch.rows();
        let sim = |a: &Vector, b: &Vector| abs_cos_sim(a, b).unwrap() / cfg.temperature;
        let mut oracle = 0.0;
        for i in 0..n {
            let denom: f64 = (0..n)
                .map(|j| sim(&batch.image_features[i], &batch.text_features[j]).exp())
                .sum();
            oracle += -(sim(&batch.image_features[i], &batch.text_features[i]).exp() / denom).ln();
        }
        for j in 0..n {
            let denom: f64 = (0..n)
                .map(|i| sim(&batch.image_features[i], &batch.text_features[j]).exp())
                .sum();
            oracle += -(sim(&batch.image_features[j], &batch.text_features[j]).exp() / denom).ln();
        }
        oracle /= 2.0 * n as f64;
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn batch_too_small() {
        let batch = EmbeddingBatch::pairs_only(vec![unit(4, 0)], vec![unit(4, 0)]);
        assert_eq!(
            info_nce(&batch, &LossConfig::default()),
            Err(LossError::BatchTooSmall { found: 1 })
        );
    }

    #[test]
    fn identical_positive_sample_gives_four_e_inv_tau() {
        let v = unit(8, 0);
        let t = unit(8, 1);
        let mut batch = EmbeddingBatch::pairs_only(vec![v.clone(), t.clone()], vec![t.clone(), v.clone()]);
        // One positive sample identical to each anchor of row 0.
        batch.pos_image[0] = vec![v.clone()];
        batch.pos_text[0] = vec![t.clone()];
        let mut cfg = LossConfig::default();
        let sp = positive_similarity(0, &batch, &cfg).unwrap();
        // image/pos-image and text/pos-text are exactly aligned; the cross
        // terms pair orthogonal axes here, so adjust to the all-equal case.
        let expected = 2.0 * (1.0 / TAU).exp() + 2.0;
        assert!((sp - expected).abs() < 1e-9, "got {sp}, want {expected}");

        // With sample pair equal to the anchor pair and text == image, all
        // four terms hit similarity 1.
        batch.text_features[0] = v.clone();
        batch.pos_text[0] = vec![v.clone()];
        cfg.temperature = 0.5;
        let sp = positive_similarity(0, &batch, &cfg).unwrap();
        assert!((sp - 4.0 * (1.0 / 0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_samples_give_four() {
        let mut batch =
            EmbeddingBatch::pairs_only(vec![unit(8, 0), unit(8, 1)], vec![unit(8, 2), unit(8, 3)]);
        batch.neg_image[0] = vec![unit(8, 4)];
        batch.neg_text[0] = vec![unit(8, 5)];
        let sn = negative_similarity(0, &batch, &LossConfig::default()).unwrap();
        assert!((sn - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_samples_match_hand_expanded_mean() {
        let batch = random_batch(11, 2, 8, 2);
        let cfg = LossConfig::default();
        let sp = positive_similarity(0, &batch, &cfg).unwrap();
        let e = |a: &Vector, b: &Vector| (abs_cos_sim(a, b).unwrap() / cfg.temperature).exp();
        let v = &batch.image_features[0];
        let t = &batch.text_features[0];
        let pv = &batch.pos_image[0];
        let pt = &batch.pos_text[0];
        let oracle = (e(v, &pv[0]) + e(v, &pv[1])) / 2.0
            + (e(t, &pt[0]) + e(t, &pt[1])) / 2.0
            + (e(v, &pt[0]) + e(v, &pt[1])) / 2.0
            + (e(t, &pv[0]) + e(t, &pv[1])) / 2.0;
        assert!((sp - oracle).abs() < 1e-12);
    }

    #[test]
    fn missing_samples_is_an_error() {
        let batch = EmbeddingBatch::pairs_only(vec![unit(4, 0), unit(4, 1)], vec![unit(4, 0), unit(4, 1)]);
        assert_eq!(
            positive_similarity(0, &batch, &LossConfig::default()),
            Err(LossError::NoSamples { row: 0, list: "positive" })
        );
    }

    #[test]
    fn balanced_sc_loss_is_ln_two() {
        // Positives and negatives at identical geometry make S^p = S^n.
        let mut batch =
            EmbeddingBatch::pairs_only(vec![unit(8, 0), unit(8, 1)], vec![unit(8, 2), unit(8, 3)]);
        for i in 0..2 {
            batch.pos_image[i] = vec![unit(8, 4)];
            batch.pos_text[i] = vec![unit(8, 5)];
            batch.neg_image[i] = vec![unit(8, 4)];
            batch.neg_text[i] = vec![unit(8, 5)];
        }
        let loss = sc_loss(&batch, &LossConfig::default()).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn aligned_positives_orthogonal_negatives_closed_form() {
        // tau = 1: S^p = 4e, S^n = 4, loss = -ln(4e / (4e + 4)) = ln(1 + 1/e).
        let v = unit(8, 0);
        let mut batch = EmbeddingBatch::pairs_only(vec![v.clone(), unit(8, 1)], vec![v.clone(), unit(8, 1)]);
        for i in 0..2 {
            let anchor = batch.image_features[i].clone();
            batch.pos_image[i] = vec![anchor.clone()];
            batch.pos_text[i] = vec![anchor.clone()];
            batch.neg_image[i] = vec![unit(8, 6)];
            batch.neg_text[i] = vec![unit(8, 7)];
        }
        let cfg = LossConfig { temperature: 1.0, ..LossConfig::default() };
        let loss = sc_loss(&batch, &cfg).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-12, "got {loss}, want {expected}");
    }

    #[test]
    fn sc_loss_matches_scalar_oracle() {
        let batch = random_batch(13, 4, 8, 3);
        let cfg = LossConfig::default();
        let loss = sc_loss(&batch, &cfg).unwrap();
        let mut oracle = 0.0;
        for i in 0..4 {
            let sp = positive_similarity(i, &batch, &cfg).unwrap();
            let sn = negative_similarity(i, &batch, &cfg).unwrap();
            oracle += ((sp + sn) / sp).ln();
        }
        oracle /= 4.0;
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_the_weighted_sum() {
        let batch = random_batch(17, 4, 8, 2);
        let zero = LossConfig { lambda_sc: 0.0, ..LossConfig::default() };
        assert_eq!(total_loss(&batch, &zero).unwrap(), info_nce(&batch, &zero).unwrap());
        let cfg = LossConfig::default();
        let combined = info_nce(&batch, &cfg).unwrap() + 0.1 * sc_loss(&batch, &cfg).unwrap();
        assert!((total_loss(&batch, &cfg).unwrap() - combined).abs() < 1e-12);
    }

    #[test]
    fn default_lambda_sc_is_one_tenth() {
        assert_eq!(LossConfig::default().lambda_sc, 0.1);
        assert_eq!(LossConfig::default().lambda_do, 0.0);
    }

    #[test]
    fn nonzero_lambda_do_is_rejected() {
        let cfg = LossConfig { lambda_do: 0.5, ..LossConfig::default() };
        assert!(matches!(cfg.validate(), Err(LossError::InvalidConfig(_))));
    }

    #[test]
    fn losses_are_scale_and_sign_invariant() {
        let mut batch = random_batch(23, 4, 8, 2);
        let cfg = LossConfig::default();
        let base = total_loss(&batch, &cfg).unwrap();
        for x in batch.image_features[1].iter_mut() {
            *x *= 3.7;
        }
        for x in batch.text_features[2].iter_mut() {
            *x = -*x;
        }
        for x in batch.pos_image[0][0].iter_mut() {
            *x *= -2.5;
        }
        let perturbed = total_loss(&batch, &cfg).unwrap();
        assert!((base - perturbed).abs() < 1e-12, "{base} vs {perturbed}");
    }

    #[test]
    fn sc_loss_is_monotone_in_sample_proximity() {
        let cfg = LossConfig::default();
        // The moving sample walks cos(theta) * e0 + sin(theta) * e2, so its
        // absolute cosine against the image anchor e0 strictly increases as
        // theta shrinks while every other pairing stays constant (the text
        // anchor e1 is orthogonal to the whole path).
        let base = {
            let mut b = EmbeddingBatch::pairs_only(
                vec![unit(8, 0), unit(8, 3)],
                vec![unit(8, 1), unit(8, 4)],
            );
            for i in 0..2 {
                b.pos_image[i] = vec![unit(8, 5)];
                b.pos_text[i] = vec![unit(8, 5)];
                b.neg_image[i] = vec![unit(8, 6)];
                b.neg_text[i] = vec![unit(8, 7)];
            }
            b
        };
        let at_angle = |degrees: f64| -> Vector {
            let theta = degrees.to_radians();
            let mut v = vec![0.0; 8];
            v[0] = theta.cos();
            v[2] = theta.sin();
            v
        };
        // Closer positive sample: loss strictly decreases.
        let mut previous = f64::INFINITY;
        for degrees in [80.0, 60.0, 40.0, 20.0] {
            let mut batch = base.clone();
            batch.pos_image[0][0] = at_angle(degrees);
            let loss = sc_loss(&batch, &cfg).unwrap();
            assert!(loss < previous, "{degrees} deg: {loss} !< {previous}");
            previous = loss;
        }
        // Closer negative sample: loss strictly increases.
        let mut previous = f64::NEG_INFINITY;
        for degrees in [80.0, 60.0, 40.0, 20.0] {
            let mut batch = base.clone();
            batch.neg_image[0][0] = at_angle(degrees);
            let loss = sc_loss(&batch, &cfg).unwrap();
            assert!(loss > previous, "{degrees} deg: {loss} !> {previous}");
            previous = loss;
        }
    }

    #[test]
    fn losses_are_finite_and_non_negative() {
        for seed in 0..20 {
            let batch = random_batch(seed, 3, 8, 2);
            let cfg = LossConfig::default();
            for value in [
                info_nce(&batch, &cfg).unwrap(),
                sc_loss(&batch, &cfg).unwrap(),
                total_loss(&batch, &cfg).unwrap(),
            ] {
                assert!(value.is_finite());
                assert!(value >= 0.0);
            }
        }
    }
}
