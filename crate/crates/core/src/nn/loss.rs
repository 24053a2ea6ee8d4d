use super::arch::{CLASS_OUTPUTS, ROT_OUTPUTS};
use super::network::Logits;
use super::Real;
use crate::error::{NlabError, Result};

/// Row-wise softmax of a row-major `rows × k` matrix, max-subtracted.
pub fn softmax_rows<F: Real>(logits: &[F], k: usize) -> Vec<F> {
    let mut out = vec![F::zero(); logits.len()];
    for (row, dst) in logits.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    out
}

fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for &v in row {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

/// Per-sample `−log softmax(logits_i)[label_i]` for a `labels.len() × k`
/// logit matrix.
pub fn softmax_cross_entropy<F: Real>(logits: &[F], k: usize, labels: &[usize]) -> Result<Vec<F>> {
    if k == 0 || logits.len() != labels.len() * k {
        return Err(NlabError::Shape {
            expected: format!("{}x{k} logits", labels.len()),
            actual: format!("{} values", logits.len()),
        });
    }
    logits
        .chunks_exact(k)
        .zip(labels)
        .map(|(row, &label)| {
            if label >= k {
                return Err(NlabError::validation(format!("label {label} out of range [0, {k})")));
            }
            // lse(row) − row[label] can round to a tiny negative
            Ok((log_sum_exp(row) - row[label]).max(F::zero()))
        })
        .collect()
}

/// Argmax class (lowest index wins ties) and its softmax probability.
pub fn predict_confidence<F: Real>(class_logits: &[F]) -> Result<(Vec<usize>, Vec<F>)> {
    if !class_logits.len().is_multiple_of(CLASS_OUTPUTS) {
        return Err(NlabError::Shape {
            expected: format!("rows of {CLASS_OUTPUTS} logits"),
            actual: format!("{} values", class_logits.len()),
        });
    }
    if class_logits.iter().any(|v| !v.is_finite()) {
        return Err(NlabError::Numeric("non-finite class logits".into()));
    }
    let probs = softmax_rows(class_logits, CLASS_OUTPUTS);
    let mut labels = Vec::with_capacity(probs.len() / CLASS_OUTPUTS);
    let mut conf = Vec::with_capacity(probs.len() / CLASS_OUTPUTS);
    for (row, prow) in class_logits
        .chunks_exact(CLASS_OUTPUTS)
        .zip(probs.chunks_exact(CLASS_OUTPUTS))
    {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        labels.push(best);
        conf.push(prow[best]);
    }
    Ok((labels, conf))
}

/// Per-sample multipliers on the class and rotation cross-entropies.
///
/// Every objective in this crate is
/// `mean_i(class_i · CE_class_i + rot_i · CE_rot_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights<F> {
    pub class: Vec<F>,
    pub rot: Vec<F>,
}

impl<F: Real> LossWeights<F> {
    /// Class loss only.
    pub fn class_only(n: usize) -> Self {
        LossWeights {
            class: vec![F::one(); n],
            rot: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle {
    /// Unweighted batch mean of the class cross-entropy.
    pub class_loss: f64,
    /// Unweighted batch mean of the rotation cross-entropy.
    pub rot_loss: f64,
    /// Weighted objective actually optimized.
    pub total: f64,
    pub per_sample_class_loss: Vec<f64>,
    pub per_sample_rot_loss: Vec<f64>,
}

/// Gradients of the batch objective w.r.t. both logit matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrads<F> {
    pub class: Vec<F>,
    pub rot: Vec<F>,
}

/// Evaluates the weighted two-head objective and its logit gradients.
pub fn composite_loss<F: Real>(
    logits: &Logits<F>,
    class_labels: &[usize],
    rot_labels: &[usize],
    weights: &LossWeights<F>,
) -> Result<(LossBundle, LogitGrads<F>)> {
    let n = logits.batch;
    if class_labels.len() != n || rot_labels.len() != n || weights.class.len() != n || weights.rot.len() != n {
        return Err(NlabError::Shape {
            expected: format!("{n} labels and weights per head"),
            actual: format!(
                "{} class labels, {} rotation labels, {}/{} weights",
                class_labels.len(),
                rot_labels.len(),
                weights.class.len(),
                weights.rot.len()
            ),
        });
    }
    if n == 0 {
        return Err(NlabError::validation("empty batch"));
    }
    let ce_class = softmax_cross_entropy(&logits.class, CLASS_OUTPUTS, class_labels)?;
    let ce_rot = softmax_cross_entropy(&logits.rot, ROT_OUTPUTS, rot_labels)?;
    let p_class = softmax_rows(&logits.class, CLASS_OUTPUTS);
    let p_rot = softmax_rows(&logits.rot, ROT_OUTPUTS);

    let inv_n = F::one() / F::from_usize(n).expect("batch size fits");
    let mut total = 0.0f64;
    let mut d_class = p_class;
    let mut d_rot = p_rot;
    for i in 0..n {
        let (wc, wr) = (weights.class[i], weights.rot[i]);
        total += wc.to_f64_lossy() * ce_class[i].to_f64_lossy() + wr.to_f64_lossy() * ce_rot[i].to_f64_lossy();
        let row = &mut d_class[i * CLASS_OUTPUTS..(i + 1) * CLASS_OUTPUTS];
        row[class_labels[i]] -= F::one();
        let scale = wc * inv_n;
        for v in row.iter_mut() {
            *v *= scale;
        }
        let row = &mut d_rot[i * ROT_OUTPUTS..(i + 1) * ROT_OUTPUTS];
        row[rot_labels[i]] -= F::one();
        let scale = wr * inv_n;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let per_class: Vec<f64> = ce_class.iter().map(|v| v.to_f64_lossy()).collect();
    let per_rot: Vec<f64> = ce_rot.iter().map(|v| v.to_f64_lossy()).collect();
    let bundle = LossBundle {
        class_loss: per_class.iter().sum::<f64>() / n as f64,
        rot_loss: per_rot.iter().sum::<f64>() / n as f64,
        total: total / n as f64,
        per_sample_class_loss: per_class,
        per_sample_rot_loss: per_rot,
    };
    Ok((
        bundle,
        LogitGrads {
            class: d_class,
            rot: d_rot,
        },
    ))
}
