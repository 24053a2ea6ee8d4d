//! Noisy-label detection: per-sample loss/confidence statistics, one
//! Gaussian mixture per statistic, and the decision rules that merge the
//! two posteriors into a clean probability λ.

mod decision;
pub mod dump;
mod gmm;

pub use decision::{
    decide, decide_elastic, decide_hard, decide_loss_only, smooth_combine, DecisionStrategy, TemperatureSchedule,
    CLEAN_THRESHOLD,
};
pub use gmm::{fit_gmm_1d, EmOptions, Feature, GmmFit, GmmModel};

use log::warn;

use crate::error::{NlabError, Result};
use crate::nn::{predict_confidence, softmax_cross_entropy, ImageBatch, Real, TwoHeadNetwork, CLASS_OUTPUTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerSampleStats {
    pub id: u32,
    pub ce_loss: f64,
    pub confidence: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanPosterior {
    pub id: u32,
    pub p_loss: f64,
    pub p_conf: f64,
    pub lambda: f64,
    pub is_clean: bool,
}

/// Samples whose loss or confidence was not finite; they are left out of
/// the mixture fits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsDiagnostics {
    pub flagged_ids: Vec<u32>,
}

/// One evaluation pass (no updates, no rotation) computing cross-entropy
/// against the observed labels and the max-softmax confidence.
pub fn collect_stats<F: Real>(
    net: &TwoHeadNetwork<F>,
    images: &ImageBatch<F>,
    ids: &[u32],
    observed: &[usize],
    epoch: usize,
    chunk: usize,
) -> Result<(Vec<PerSampleStats>, StatsDiagnostics)> {
    if ids.len() != images.count || observed.len() != images.count {
        return Err(NlabError::Shape {
            expected: format!("{} ids and labels", images.count),
            actual: format!("{} ids, {} labels", ids.len(), observed.len()),
        });
    }
    if !net.all_finite() {
        return Err(NlabError::Numeric("network parameters are not finite".into()));
    }
    let per = images.shape.len();
    let chunk = chunk.max(1);
    let mut stats = Vec::with_capacity(images.count);
    let mut diag = StatsDiagnostics::default();
    for start in (0..images.count).step_by(chunk) {
        let end = (start + chunk).min(images.count);
        let part = ImageBatch::new(images.shape, images.data[start * per..end * per].to_vec())?;
        let logits = net.forward(&part)?;
        let labels = &observed[start..end];
        let losses = softmax_cross_entropy(&logits.class, CLASS_OUTPUTS, labels)?;
        let finite_rows: Vec<bool> = logits
            .class
            .chunks_exact(CLASS_OUTPUTS)
            .map(|r| r.iter().all(|v| v.is_finite()))
            .collect();
        let confidences = if finite_rows.iter().all(|&f| f) {
            predict_confidence(&logits.class)?.1
        } else {
            // score finite rows one at a time
            logits
                .class
                .chunks_exact(CLASS_OUTPUTS)
                .zip(&finite_rows)
                .map(|(row, &ok)| {
                    if ok {
                        predict_confidence(row).map(|c| c.1[0])
                    } else {
                        Ok(F::nan())
                    }
                })
                .collect::<Result<Vec<F>>>()?
        };
        for (i, (l, c)) in losses.iter().zip(&confidences).enumerate() {
            let (l, c) = (l.to_f64_lossy(), c.to_f64_lossy());
            let id = ids[start + i];
            if !l.is_finite() || !c.is_finite() {
                diag.flagged_ids.push(id);
            }
            stats.push(PerSampleStats {
                id,
                ce_loss: l,
                confidence: c,
                epoch,
            });
        }
    }
    if !diag.flagged_ids.is_empty() {
        warn!(
            "epoch {epoch}: {} samples with non-finite statistics excluded from detection",
            diag.flagged_ids.len()
        );
    }
    Ok((stats, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub strategy: DecisionStrategy,
    pub schedule: TemperatureSchedule,
    /// Min-max scale losses to [0, 1] before fitting.
    pub normalize_loss: bool,
    pub em: EmOptions,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            strategy: DecisionStrategy::LossOnly,
            schedule: TemperatureSchedule::default(),
            normalize_loss: true,
            em: EmOptions::default(),
        }
    }
}

/// Result of fitting both mixtures on one pass of statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPass {
    pub epoch: usize,
    /// Position on the temperature schedule used for the elastic rule.
    pub schedule_epoch: usize,
    pub stats: Vec<PerSampleStats>,
    pub gmm_loss: GmmFit,
    pub gmm_conf: GmmFit,
    /// Posteriors under the configured strategy, in `stats` order.
    pub posteriors: Vec<CleanPosterior>,
    pub flagged_ids: Vec<u32>,
}

impl DetectionPass {
    pub fn degenerate(&self) -> bool {
        self.gmm_loss.model.degenerate || self.gmm_conf.model.degenerate
    }

    /// Posteriors re-decided under another strategy.
    pub fn posteriors_for(&self, strategy: DecisionStrategy, schedule: &TemperatureSchedule) -> Vec<CleanPosterior> {
        self.posteriors
            .iter()
            .map(|p| {
                let (lambda, is_clean) = decide(strategy, p.p_loss, p.p_conf, schedule, self.schedule_epoch);
                CleanPosterior { lambda, is_clean, ..*p }
            })
            .collect()
    }
}

/// Fits the loss and confidence mixtures and applies the decision rule.
///
/// Flagged (non-finite) samples get `p_loss = p_conf = 0`, i.e. noisy.
pub fn run_detection(
    stats: Vec<PerSampleStats>,
    flagged_ids: Vec<u32>,
    cfg: &DetectionConfig,
    schedule_epoch: usize,
) -> Result<DetectionPass> {
    let epoch = stats.first().map(|s| s.epoch).unwrap_or(0);
    let finite: Vec<&PerSampleStats> = stats
        .iter()
        .filter(|s| s.ce_loss.is_finite() && s.confidence.is_finite())
        .collect();
    let losses: Vec<f64> = finite.iter().map(|s| s.ce_loss).collect();
    let (lo, hi) = losses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = |v: f64| {
        if cfg.normalize_loss && hi > lo {
            (v - lo) / (hi - lo)
        } else {
            v
        }
    };
    let loss_feature: Vec<f64> = losses.iter().map(|&v| scale(v)).collect();
    let conf_feature: Vec<f64> = finite.iter().map(|s| s.confidence).collect();
    let gmm_loss = fit_gmm_1d(&loss_feature, Feature::Loss, cfg.em)?;
    let gmm_conf = fit_gmm_1d(&conf_feature, Feature::Confidence, cfg.em)?;

    let posteriors = stats
        .iter()
        .map(|s| {
            let (p_loss, p_conf) = if s.ce_loss.is_finite() && s.confidence.is_finite() {
                (
                    gmm_loss.model.posterior_clean(scale(s.ce_loss)),
                    gmm_conf.model.posterior_clean(s.confidence),
                )
            } else {
                (0.0, 0.0)
            };
            let (lambda, is_clean) = decide(cfg.strategy, p_loss, p_conf, &cfg.schedule, schedule_epoch);
            CleanPosterior {
                id: s.id,
                p_loss,
                p_conf,
                lambda,
                is_clean,
            }
        })
        .collect();
    Ok(DetectionPass {
        epoch,
        schedule_epoch,
        stats,
        gmm_loss,
        gmm_conf,
        posteriors,
        flagged_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionMetrics {
    /// Fraction of samples whose clean call equals "not noisy".
    pub clean_prediction_accuracy: f64,
    pub predicted_clean_fraction: f64,
    pub true_clean: usize,
    pub false_clean: usize,
    pub true_noisy: usize,
    pub false_noisy: usize,
}

/// Scores clean calls against ground-truth noise flags.
pub fn detection_metrics(is_clean: &[bool], is_noisy: &[bool]) -> Result<DetectionMetrics> {
    if is_clean.len() != is_noisy.len() {
        return Err(NlabError::Shape {
            expected: format!("{} noise flags", is_clean.len()),
            actual: format!("{}", is_noisy.len()),
        });
    }
    if is_clean.is_empty() {
        return Err(NlabError::validation("no samples to score"));
    }
    let mut m = DetectionMetrics::default();
    for (&c, &n) in is_clean.iter().zip(is_noisy) {
        match (c, n) {
            (true, false) => m.true_clean += 1,
            (true, true) => m.false_clean += 1,
            (false, true) => m.true_noisy += 1,
            (false, false) => m.false_noisy += 1,
        }
    }
    let total = is_clean.len() as f64;
    m.clean_prediction_accuracy = (m.true_clean + m.true_noisy) as f64 / total;
    m.predicted_clean_fraction = (m.true_clean + m.false_clean) as f64 / total;
    Ok(m)
}
