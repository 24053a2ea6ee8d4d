//! Training loop: warm-up on plain cross-entropy, then rotation
//! augmentation with a regularization or separation objective weighted by
//! per-sample clean probabilities λ refreshed once per epoch.

mod config;
mod run;

pub use config::{TrainConfig, TrainMode};
pub use run::{run_training, BestCheckpoint, TrainOutcome};

use crate::detection::DecisionStrategy;
use crate::error::{NlabError, Result};
use crate::nn::{LossWeights, Real};

/// Clean-call quality of every decision strategy on one detection pass,
/// indexed like [`DecisionStrategy::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSnapshot {
    pub clean_accuracy: [f64; 3],
    pub clean_fraction: [f64; 3],
}

impl DetectionSnapshot {
    pub fn accuracy(&self, s: DecisionStrategy) -> f64 {
        self.clean_accuracy[strategy_index(s)]
    }

    pub fn fraction(&self, s: DecisionStrategy) -> f64 {
        self.clean_fraction[strategy_index(s)]
    }
}

pub(crate) fn strategy_index(s: DecisionStrategy) -> usize {
    DecisionStrategy::ALL.iter().position(|&x| x == s).expect("listed")
}

/// One row of `metrics.csv`. Epochs count from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean of the optimized objective over the epoch's batches.
    pub train_loss: f64,
    pub class_loss: f64,
    pub rot_loss: f64,
    pub val_one_image: f64,
    pub val_four_rotation: Option<f64>,
    /// Detection run at the end of this epoch, if any.
    pub detection: Option<DetectionSnapshot>,
    /// Fraction called clean by the configured strategy on that pass.
    pub predicted_clean_fraction: Option<f64>,
    pub wall_time_s: f64,
}

fn check_lengths(class: &[f64], rot: &[f64], lambdas: &[f64]) -> Result<()> {
    if class.len() != rot.len() || class.len() != lambdas.len() {
        return Err(NlabError::Shape {
            expected: format!("{} losses and lambdas", class.len()),
            actual: format!("{} rotation losses, {} lambdas", rot.len(), lambdas.len()),
        });
    }
    if class.is_empty() {
        return Err(NlabError::validation("empty batch"));
    }
    Ok(())
}

/// Mean class cross-entropy.
pub fn loss_baseline(class_losses: &[f64]) -> Result<f64> {
    if class_losses.is_empty() {
        return Err(NlabError::validation("empty batch"));
    }
    Ok(class_losses.iter().sum::<f64>() / class_losses.len() as f64)
}

/// `mean_i(CE_class_i + α(1 − λ_i)·CE_rot_i)`.
pub fn loss_regularization(class_losses: &[f64], rot_losses: &[f64], lambdas: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(class_losses, rot_losses, lambdas)?;
    let w = regularization_weights::<f64>(lambdas, alpha)?;
    Ok(weighted_mean(class_losses, rot_losses, &w))
}

/// `mean_i(CE_class_i·[λ_i ≥ c] + CE_rot_i·[λ_i < c])`.
pub fn loss_separation(class_losses: &[f64], rot_losses: &[f64], lambdas: &[f64], cutoff: f64) -> Result<f64> {
    check_lengths(class_losses, rot_losses, lambdas)?;
    let w = separation_weights::<f64>(lambdas, cutoff);
    Ok(weighted_mean(class_losses, rot_losses, &w))
}

fn weighted_mean(class: &[f64], rot: &[f64], w: &LossWeights<f64>) -> f64 {
    let total: f64 = (0..class.len())
        .map(|i| w.class[i] * class[i] + w.rot[i] * rot[i])
        .sum();
    total / class.len() as f64
}

pub fn regularization_weights<F: Real>(lambdas: &[f64], alpha: f64) -> Result<LossWeights<F>> {
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(NlabError::validation(format!("lambda {bad} outside [0, 1]")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(NlabError::validation(format!(
            "regularization weight {alpha} must be non-negative"
        )));
    }
    Ok(LossWeights {
        class: vec![F::one(); lambdas.len()],
        rot: lambdas.iter().map(|&l| F::from_f64_lossy(alpha * (1.0 - l))).collect(),
    })
}

pub fn separation_weights<F: Real>(lambdas: &[f64], cutoff: f64) -> LossWeights<F> {
    let (class, rot) = lambdas
        .iter()
        .map(|&l| {
            if l >= cutoff {
                (F::one(), F::zero())
            } else {
                (F::zero(), F::one())
            }
        })
        .unzip();
    LossWeights { class, rot }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_mean() {
        assert!((loss_baseline(&[10f64.ln(); 4]).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert_eq!(loss_baseline(&[1.0, 2.0, 6.0]).unwrap(), 3.0);
        assert!(loss_baseline(&[]).is_err());
    }

    #[test]
    fn regularization_reductions() {
        let c = [0.5, 1.5, 2.0];
        let r = [1.0, 0.25, 3.0];
        let base = loss_baseline(&c).unwrap();
        assert_eq!(loss_regularization(&c, &r, &[1.0; 3], 1.0).unwrap(), base);
        assert_eq!(loss_regularization(&c, &r, &[0.1, 0.7, 0.3], 0.0).unwrap(), base);
        let full = loss_regularization(&c, &r, &[0.0; 3], 1.0).unwrap();
        assert!((full - (1.5 + 1.75 + 5.0) / 3.0).abs() < 1e-15);
        assert!(loss_regularization(&c, &r, &[1.2, 0.0, 0.0], 1.0).is_err());
        assert!(loss_regularization(&c, &r, &[-0.1, 0.0, 0.0], 1.0).is_err());
        assert!(loss_regularization(&c, &r, &[0.0; 2], 1.0).is_err());
    }

    #[test]
    fn separation_routes_each_sample() {
        let c = [0.8, 2.0];
        let r = [1.1, 0.6];
        assert_eq!(loss_separation(&c, &r, &[0.9, 0.1], 0.5).unwrap(), 0.5 * (0.8 + 0.6));
        assert_eq!(
            loss_separation(&c, &r, &[0.0, 0.3], 0.0).unwrap(),
            loss_baseline(&c).unwrap()
        );
        assert_eq!(loss_separation(&c, &r, &[1.0, 0.99], 1.0).unwrap(), 0.5 * (0.8 + 0.6));
        let w = separation_weights::<f32>(&[0.5, 0.4999], 0.5);
        assert_eq!(w.class, vec![1.0, 0.0]);
        assert_eq!(w.rot, vec![0.0, 1.0]);
    }
}
