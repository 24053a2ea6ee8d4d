//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- c1 c3`. Criteria 1-4
//! and 7 decide the exit status; the training-trend criteria 5 and 6 are
//! reported but do not fail the process.

mod common;

use std::time::Instant;

use common::{gmm_trial, gmm_trial_ok, gradcheck, synthetic_data, Objective};
use nlab::dataset::{cifar, PreparedData};
use nlab::detection::{
    decide_elastic, decide_hard, decide_loss_only, smooth_combine, DecisionStrategy, TemperatureSchedule,
};
use nlab::evaluation::class_probabilities;
use nlab::nn::{checkpoint, Architecture, ImageBatch, TwoHeadNetwork};
use nlab::trainer::{run_training, TrainConfig, TrainMode, TrainOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pixel-noise level of the synthetic stand-in for CIFAR-10.
const DIFFICULTY: f64 = 2.0;
const TREND_SEEDS: u64 = 5;
/// Warm-up for the training-trend models: ends before the baseline's
/// validation peak (epoch 7 on held-out seed 100), after which it memorizes.
const TREND_WARMUP: usize = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn c1_gradients() -> Verdict {
    let mut worst = 0.0f64;
    let mut params = 0;
    for objective in Objective::ALL {
        for seed in 0..3 {
            let g = gradcheck(objective, seed);
            params = g.parameters;
            worst = worst.max(g.max_relative_error);
        }
    }
    verdict(
        worst < 1e-4 && params <= 1000,
        format!("{params} parameters, max relative error {worst:.2e} (limit 1e-4)"),
    )
}

fn c2_gmm() -> Verdict {
    let trials: Vec<_> = (0..20).map(gmm_trial).collect();
    let good = trials.iter().filter(|t| gmm_trial_ok(t)).count();
    let monotone = trials.iter().all(|t| t.monotone);
    let dev = trials
        .iter()
        .map(|t| (t.means[0].abs()).max((t.means[1] - 6.0).abs()))
        .fold(0.0, f64::max);
    verdict(
        good == 20,
        format!("{good}/20 trials within tolerance, worst mean error {dev:.3}, log-likelihood monotone: {monotone}"),
    )
}

fn c3_decisions() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 20_000;
    let mut failures = 0usize;
    for _ in 0..cases {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let alpha = rng.random_range(1e-3..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let total = rng.random_range(1..300usize);
        let sched = TemperatureSchedule {
            total_epochs: total,
            ..Default::default()
        };
        let v = smooth_combine(a, b, alpha, 1e-3);
        let mut ok = !decide_hard(a, b).1 || decide_loss_only(a).1;
        ok &= a.min(b) <= v && v <= a.max(b);
        ok &= v == smooth_combine(b, a, alpha, 1e-3);
        let (le, ce) = decide_elastic(a, b, &sched, total);
        ok &= (le - decide_hard(a, b).0).abs() <= 1e-6 && ce == decide_hard(a, b).1;
        ok &= sched.temperature_at(0) == sched.alpha_start && sched.temperature_at(total) == sched.alpha_end;
        failures += usize::from(!ok);
    }
    verdict(failures == 0, format!("{cases} random cases, {failures} violations"))
}

fn identity_config(mode: TrainMode) -> TrainConfig {
    let mut cfg = TrainConfig {
        mode,
        warmup_epochs: 0,
        max_epochs: 5,
        evaluate_test: false,
        ..Default::default()
    };
    cfg.set_all_seeds(4);
    cfg
}

fn c4_reductions() -> Verdict {
    let data = synthetic_data(4, DIFFICULTY, 2000, 500, 0, 0.4);
    let aug = run_training(&identity_config(TrainMode::Augmentation), &data, None).unwrap();
    let bits = |o: &TrainOutcome| checkpoint::encode(&o.network);

    let mut ones = identity_config(TrainMode::Regularization);
    ones.fixed_lambda = Some(1.0);
    let ones = run_training(&ones, &data, None).unwrap();
    let ones_ok = bits(&ones) == bits(&aug) && ones.batch_losses == aug.batch_losses;

    let mut zero = identity_config(TrainMode::Regularization);
    zero.reg_weight = 0.0;
    let zero = run_training(&zero, &data, None).unwrap();
    let zero_ok = bits(&zero) == bits(&aug) && zero.batch_losses == aug.batch_losses;

    let mut sep = identity_config(TrainMode::Separation);
    sep.cutoff = 0.0;
    let sep = run_training(&sep, &data, None).unwrap();
    let gap = sep
        .batch_losses
        .iter()
        .flatten()
        .zip(aug.batch_losses.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let batches: usize = aug.batch_losses.iter().map(Vec::len).sum();
    verdict(
        ones_ok && zero_ok && gap <= 1e-9,
        format!(
            "5 epochs x {batches} batches at subset 2000: lambda=1 identical {ones_ok}, alpha=0 identical {zero_ok}, separation c=0 max batch gap {gap:.1e}"
        ),
    )
}

fn trend_data(seed: u64, rate: f64) -> PreparedData {
    synthetic_data(seed, DIFFICULTY, 5000, 1000, 0, rate)
}

fn trend_config(mode: TrainMode, warmup: usize, epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        mode,
        decision: DecisionStrategy::LossOnly,
        warmup_epochs: warmup,
        max_epochs: epochs,
        evaluate_test: false,
        ..Default::default()
    };
    cfg.set_all_seeds(seed);
    cfg
}

fn c5_detection() -> Verdict {
    let (mut above, mut hard_acc, mut hard_frac, mut all) = (0, 0, 0, 0);
    let mut lines = Vec::new();
    for seed in 0..TREND_SEEDS {
        let data = trend_data(seed, 0.4);
        let mut cfg = trend_config(TrainMode::Regularization, 10, 50, seed);
        cfg.monitor_detection = true;
        let out = run_training(&cfg, &data, None).unwrap();
        let after: Vec<_> = out
            .reports
            .iter()
            .filter(|r| r.epoch > cfg.warmup_epochs)
            .filter_map(|r| r.detection)
            .collect();
        let min_loss_only = after
            .iter()
            .map(|d| d.accuracy(DecisionStrategy::LossOnly))
            .fold(f64::INFINITY, f64::min);
        let last = out.reports.last().unwrap().detection.unwrap();
        let (l_acc, h_acc) = (
            last.accuracy(DecisionStrategy::LossOnly),
            last.accuracy(DecisionStrategy::Hard),
        );
        let (l_frac, h_frac) = (
            last.fraction(DecisionStrategy::LossOnly),
            last.fraction(DecisionStrategy::Hard),
        );
        let a = min_loss_only > 0.70;
        let b = h_acc >= l_acc;
        let c = h_frac < l_frac;
        above += usize::from(a);
        hard_acc += usize::from(b);
        hard_frac += usize::from(c);
        all += usize::from(a && b && c);
        lines.push(format!(
            "seed {seed}: min loss-only acc {min_loss_only:.3}; final acc loss-only {l_acc:.3} hard {h_acc:.3}; fraction loss-only {l_frac:.3} hard {h_frac:.3}"
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    verdict(
        all >= 4,
        format!(
            "{all}/{TREND_SEEDS} seeds pass all; loss-only > 0.70 after warm-up {above}/{TREND_SEEDS}, hard acc >= loss-only {hard_acc}/{TREND_SEEDS}, hard fraction < loss-only {hard_frac}/{TREND_SEEDS}"
        ),
    )
}

fn largest_drop_from_peak(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut drop = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        drop = drop.max(peak - v);
    }
    drop
}

fn c6_training() -> Verdict {
    let (mut ordering, mut rotation, mut stable, mut all) = (0, 0, 0, 0);
    let mut lines = Vec::new();
    for seed in 0..TREND_SEEDS {
        let data = trend_data(seed, 0.8);
        let base = run_training(&trend_config(TrainMode::Baseline, 0, 100, seed), &data, None).unwrap();
        let reg = run_training(
            &trend_config(TrainMode::Regularization, TREND_WARMUP, 100, seed),
            &data,
            None,
        )
        .unwrap();
        let sep = run_training(
            &trend_config(TrainMode::Separation, TREND_WARMUP, 100, seed),
            &data,
            None,
        )
        .unwrap();
        let base_one = base.summary.val_one_image.unwrap();
        let reg_one = reg.summary.val_one_image.unwrap();
        let reg_four = reg.summary.val_four_rotation.unwrap();
        // a model's best validation accuracy is its best protocol
        let reg_best = reg_one.max(reg_four);
        let sep_curve: Vec<f64> = sep.reports.iter().map(|r| r.val_one_image).collect();
        let drop = largest_drop_from_peak(&sep_curve);
        let a = reg_best >= base_one;
        let b = reg_four >= reg_one;
        let c = drop <= 3.0;
        ordering += usize::from(a);
        rotation += usize::from(b);
        stable += usize::from(c);
        all += usize::from(a && b && c);
        lines.push(format!(
            "seed {seed}: best val baseline {base_one:.1}, reg {reg_one:.1} (1-img) {reg_four:.1} (4-rot); separation peak {:.1}, largest drop {drop:.1}",
            sep_curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    verdict(
        all >= 4,
        format!(
            "{all}/{TREND_SEEDS} seeds pass all; reg >= baseline {ordering}/{TREND_SEEDS}, 4-rot >= 1-img {rotation}/{TREND_SEEDS}, separation drop <= 3 {stable}/{TREND_SEEDS}"
        ),
    )
}

fn c7_determinism() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let raw = root.path().join("raw");
    nlab::dataset::synthetic::write_cifar_dir(
        &raw,
        nlab::dataset::synthetic::SyntheticSpec {
            seed: 7,
            per_train_file: 120,
            test_count: 100,
            difficulty: DIFFICULTY,
        },
    )
    .unwrap();
    let spec = nlab::dataset::PrepareSpec {
        split: nlab::dataset::SplitSpec {
            train_count: 500,
            val_count: 100,
            seed: 7,
            stratified: false,
        },
        noise_rate: 0.4,
        noise_seed: 7,
        ..Default::default()
    };
    let read = |p: std::path::PathBuf| std::fs::read(p).unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    nlab::cli::cmd_prepare(&raw, &a, spec).unwrap();
    nlab::cli::cmd_prepare(&raw, &b, spec).unwrap();
    let prepare_ok = ["prepare.manifest", "noise_manifest.csv", "train.bin", "val.bin"]
        .iter()
        .all(|f| read(a.join(f)) == read(b.join(f)));

    let mut cfg = trend_config(TrainMode::Regularization, 1, 2, 7);
    cfg.decision = DecisionStrategy::Elastic;
    cfg.data_dir = Some(a.clone());
    let (r1, _) = nlab::cli::cmd_train(cfg.clone(), &root.path().join("run")).unwrap();
    let (r2, _) = nlab::cli::cmd_train(cfg, &root.path().join("run")).unwrap();
    let train_ok = read(r1.manifest_path()) == read(r2.manifest_path())
        && ["initial", "final", "best_one_image", "best_four_rotation"]
            .iter()
            .all(|n| read(r1.checkpoint_path(n)) == read(r2.checkpoint_path(n)));

    let bytes = read(raw.join(cifar::TRAIN_FILES[0]));
    let records = cifar::parse_records(&bytes, &raw, 0).unwrap();
    let record_ok = cifar::RECORD_BYTES == 3073 && bytes.len() == 120 * 3073 && records.len() == 120;
    let truncated = cifar::parse_records(&bytes[..bytes.len() - 1], &raw, 0).is_err();

    let arch = Architecture::default();
    let net = TwoHeadNetwork::<f32>::new(arch.clone(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let images = ImageBatch::new(
        arch.input,
        (0..50 * arch.input.len())
            .map(|_| rng.random_range(-2.0f32..2.0))
            .collect(),
    )
    .unwrap();
    let (_, four) = class_probabilities(&net, &images, true, 16).unwrap();
    let sum_gap = four
        .unwrap()
        .chunks_exact(10)
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);

    verdict(
        prepare_ok && train_ok && record_ok && truncated && sum_gap <= 1e-9,
        format!(
            "prepare byte-identical {prepare_ok}, train manifest+checkpoints byte-identical {train_ok}, 3073-byte records {}, 4-rotation sum error {sum_gap:.1e}",
            record_ok && truncated
        ),
    )
}

type Criterion = (&'static str, &'static str, bool, fn() -> Verdict);

const CRITERIA: [Criterion; 7] = [
    ("c1", "gradient correctness", true, c1_gradients),
    ("c2", "GMM oracle equivalence", true, c2_gmm),
    ("c3", "decision-rule invariants", true, c3_decisions),
    ("c4", "reduction identities", true, c4_reductions),
    ("c5", "detection trend", false, c5_detection),
    ("c6", "training trend", false, c6_training),
    ("c7", "determinism and formats", true, c7_determinism),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut gating_failures = 0;
    for (id, name, gating, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let started = Instant::now();
        let v = run();
        println!(
            "{} {id} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            started.elapsed().as_secs_f64()
        );
        if gating && !v.pass {
            gating_failures += 1;
        }
    }
    if gating_failures > 0 {
        std::process::exit(1);
    }
}
