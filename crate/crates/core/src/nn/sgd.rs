use super::loss::{composite_loss, LossBundle, LossWeights};
use super::network::{Gradients, ImageBatch, TwoHeadNetwork};
use super::Real;
use crate::error::{NlabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 64,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NlabError::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NlabError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(NlabError::Config("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NlabError::Config(format!(
                "weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + λ·θ)`, `θ ← θ − η·v`.
#[derive(Debug, Clone)]
pub struct Sgd<F> {
    cfg: SgdConfig,
    velocity: Vec<Vec<F>>,
}

impl<F: Real> Sgd<F> {
    pub fn new(cfg: SgdConfig) -> Self {
        Sgd {
            cfg,
            velocity: Vec::new(),
        }
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    /// Applies one update to raw parameter slices.
    pub fn step_blocks(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        }
        let lr = F::from_f64_lossy(self.cfg.learning_rate);
        let mu = F::from_f64_lossy(self.cfg.momentum);
        let wd = F::from_f64_lossy(self.cfg.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((pv, &gv), vv) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let mut d = gv;
                if wd != F::zero() {
                    d += wd * *pv;
                }
                *vv = mu * *vv + d;
                *pv -= lr * *vv;
            }
        }
    }

    pub fn step(&mut self, net: &mut TwoHeadNetwork<F>, grads: &Gradients<F>) {
        let grad_refs: Vec<&[F]> = grads.blocks.iter().map(|g| g.as_slice()).collect();
        let mut params: Vec<&mut [F]> = net.blocks_mut().iter_mut().map(|b| b.values.as_mut_slice()).collect();
        self.step_blocks(&mut params, &grad_refs);
    }
}

/// Where a step happens, for diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepContext {
    pub epoch: usize,
    pub batch: usize,
}

/// Forward, loss, backward and one SGD update on a single mini-batch.
///
/// Gradients are checked before the update; a non-finite entry aborts
/// without touching the parameters.
pub fn train_step<F: Real>(
    net: &mut TwoHeadNetwork<F>,
    opt: &mut Sgd<F>,
    batch: &ImageBatch<F>,
    class_labels: &[usize],
    rot_labels: &[usize],
    weights: &LossWeights<F>,
    ctx: StepContext,
) -> Result<LossBundle> {
    let (logits, cache) = net.forward_train(batch)?;
    let (bundle, d_logits) = composite_loss(&logits, class_labels, rot_labels, weights)?;
    if !bundle.total.is_finite() {
        return Err(NlabError::NonFiniteGradient {
            epoch: ctx.epoch,
            batch: ctx.batch,
            block: "loss".into(),
        });
    }
    let grads = net.backward(&cache, &d_logits.class, &d_logits.rot)?;
    for (g, b) in grads.blocks.iter().zip(net.blocks()) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NlabError::NonFiniteGradient {
                epoch: ctx.epoch,
                batch: ctx.batch,
                block: b.name.clone(),
            });
        }
    }
    opt.step(net, &grads);
    Ok(bundle)
}
