#![allow(dead_code)]

use nlab::dataset::synthetic::{generate, SyntheticSpec};
use nlab::dataset::{prepare, PrepareSpec, PreparedData, SplitSpec};
use nlab::detection::{fit_gmm_1d, EmOptions, Feature};
use nlab::nn::{composite_loss, Architecture, ImageBatch, LossWeights, TwoHeadNetwork, CLASS_OUTPUTS, ROT_OUTPUTS};
use nlab::trainer::{regularization_weights, separation_weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 4×4×2 input, one 3×3 conv with 3 channels, 8 hidden units: 287 parameters.
pub fn gradcheck_arch() -> Architecture {
    Architecture::parse("4x4x2:c3k3:h8").unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Baseline,
    /// α = 1, mixed λ.
    Regularization,
    /// c = 0.5, mixed λ.
    Separation,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Baseline, Objective::Regularization, Objective::Separation];

    fn weights(self, lambdas: &[f64]) -> LossWeights<f64> {
        match self {
            Objective::Baseline => LossWeights::class_only(lambdas.len()),
            Objective::Regularization => regularization_weights(lambdas, 1.0).unwrap(),
            Objective::Separation => separation_weights(lambdas, 0.5),
        }
    }
}

pub struct GradCheck {
    pub parameters: usize,
    /// Largest `|a − n| / max(|a|, |n|)` over entries where either side
    /// exceeds `1e-7`.
    pub max_relative_error: f64,
    /// Largest `|a − n|` over all entries.
    pub max_absolute_error: f64,
}

/// Central finite differences against back-propagation in `f64`.
pub fn gradcheck(objective: Objective, seed: u64) -> GradCheck {
    let arch = gradcheck_arch();
    let mut net = TwoHeadNetwork::<f64>::new(arch.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = 6;
    let data: Vec<f64> = (0..n * arch.input.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = ImageBatch::new(arch.input, data).unwrap();
    let class: Vec<usize> = (0..n).map(|_| rng.random_range(0..CLASS_OUTPUTS)).collect();
    let rot: Vec<usize> = (0..n).map(|_| rng.random_range(0..ROT_OUTPUTS)).collect();
    let lambdas = [0.05, 0.3, 0.49, 0.5, 0.8, 1.0];
    let weights = objective.weights(&lambdas);

    let (logits, cache) = net.forward_train(&batch).unwrap();
    let (_, d) = composite_loss(&logits, &class, &rot, &weights).unwrap();
    let analytic = net.backward(&cache, &d.class, &d.rot).unwrap();

    let loss = |net: &TwoHeadNetwork<f64>| {
        let logits = net.forward(&batch).unwrap();
        composite_loss(&logits, &class, &rot, &weights).unwrap().0.total
    };
    let h = 1e-5;
    let mut out = GradCheck {
        parameters: net.parameter_count(),
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
    };
    for b in 0..net.blocks().len() {
        for j in 0..net.blocks()[b].values.len() {
            let orig = net.blocks()[b].values[j];
            net.blocks_mut()[b].values[j] = orig + h;
            let plus = loss(&net);
            net.blocks_mut()[b].values[j] = orig - h;
            let minus = loss(&net);
            net.blocks_mut()[b].values[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.blocks[b][j];
            let abs = (a - numeric).abs();
            out.max_absolute_error = out.max_absolute_error.max(abs);
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-7 {
                out.max_relative_error = out.max_relative_error.max(abs / scale);
            }
        }
    }
    out
}

pub struct GmmTrial {
    pub means: [f64; 2],
    pub weights: [f64; 2],
    pub monotone: bool,
}

/// Fits 2000 draws from `0.5·N(0,1) + 0.5·N(6,1)`; components come back
/// ordered by mean.
pub fn gmm_trial(seed: u64) -> GmmTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let values: Vec<f64> = (0..2000)
        .map(|_| {
            let shift = if rng.random_bool(0.5) { 6.0 } else { 0.0 };
            shift + unit.sample(&mut rng)
        })
        .collect();
    let fit = fit_gmm_1d(&values, Feature::Loss, EmOptions::default()).unwrap();
    let m = &fit.model;
    let (lo, hi) = if m.means[0] <= m.means[1] { (0, 1) } else { (1, 0) };
    GmmTrial {
        means: [m.means[lo], m.means[hi]],
        weights: [m.weights[lo], m.weights[hi]],
        monotone: fit.trace.windows(2).all(|w| w[1] >= w[0]),
    }
}

pub fn gmm_trial_ok(t: &GmmTrial) -> bool {
    (t.means[0] - 0.0).abs() <= 0.2
        && (t.means[1] - 6.0).abs() <= 0.2
        && (t.weights[0] - 0.5).abs() <= 0.05
        && (t.weights[1] - 0.5).abs() <= 0.05
        && t.monotone
}

/// Synthetic CIFAR-shaped data split into `train`/`val` with `rate` noise.
pub fn synthetic_data(seed: u64, difficulty: f64, train: usize, val: usize, test: usize, rate: f64) -> PreparedData {
    let per_file = (train + val).div_ceil(5);
    let (pool, test) = generate(SyntheticSpec {
        seed,
        per_train_file: per_file,
        test_count: test,
        difficulty,
    })
    .unwrap();
    let spec = PrepareSpec {
        split: SplitSpec {
            train_count: train,
            val_count: val,
            seed,
            stratified: false,
        },
        noise_rate: rate,
        noise_seed: seed,
        ..Default::default()
    };
    prepare(&pool, test, spec).unwrap().0
}
