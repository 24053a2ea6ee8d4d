use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    regularization_weights, separation_weights, strategy_index, DetectionSnapshot, EpochReport, TrainConfig, TrainMode,
};
use crate::dataset::{balanced_subset, rotate_image, ChannelStats, PreparedData, SampleRecord};
use crate::detection::{collect_stats, detection_metrics, dump, run_detection, DecisionStrategy, DetectionPass};
use crate::error::{NlabError, Result};
use crate::evaluation::{accuracy_both, PredictionProtocol, RunSummary};
use crate::nn::{train_step, ImageBatch, InputShape, LossWeights, Sgd, StepContext, TwoHeadNetwork};
use crate::rundir::RunDirectory;

/// Network snapshot with the best validation accuracy under one protocol.
#[derive(Debug, Clone)]
pub struct BestCheckpoint {
    pub protocol: PredictionProtocol,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub network: TwoHeadNetwork<f32>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: TwoHeadNetwork<f32>,
    pub initial: TwoHeadNetwork<f32>,
    pub reports: Vec<EpochReport>,
    pub summary: RunSummary,
    pub best: Vec<BestCheckpoint>,
    /// Optimized objective per batch, per epoch.
    pub batch_losses: Vec<Vec<f64>>,
    /// λ in training-set order after the last refresh.
    pub lambdas: Vec<f64>,
    pub train_ids: Vec<u32>,
    pub channel_stats: ChannelStats,
    pub detection_passes: usize,
}

struct Normalized {
    images: ImageBatch<f32>,
    labels: Vec<usize>,
}

fn subset(records: &[SampleRecord], n: usize) -> Result<Vec<SampleRecord>> {
    if n == 0 || n >= records.len() {
        Ok(records.to_vec())
    } else {
        balanced_subset(records, n)
    }
}

fn normalize(records: &[SampleRecord], stats: &ChannelStats, shape: InputShape, observed: bool) -> Result<Normalized> {
    let images = stats.batch(records.iter().map(|r| r.image.as_slice()), shape)?;
    let labels = records
        .iter()
        .map(|r| if observed { r.observed_label } else { r.true_label } as usize)
        .collect();
    Ok(Normalized { images, labels })
}

/// Everything about a single detection refresh that the run keeps.
struct Refresh {
    snapshot: DetectionSnapshot,
    active_fraction: f64,
}

fn snapshot(pass: &DetectionPass, cfg: &TrainConfig, is_noisy: &[bool]) -> Result<DetectionSnapshot> {
    let schedule = cfg.schedule();
    let mut snap = DetectionSnapshot {
        clean_accuracy: [0.0; 3],
        clean_fraction: [0.0; 3],
    };
    for s in DecisionStrategy::ALL {
        let calls: Vec<bool> = pass.posteriors_for(s, &schedule).iter().map(|p| p.is_clean).collect();
        let m = detection_metrics(&calls, is_noisy)?;
        snap.clean_accuracy[strategy_index(s)] = m.clean_prediction_accuracy;
        snap.clean_fraction[strategy_index(s)] = m.predicted_clean_fraction;
    }
    Ok(snap)
}

/// Trains one model on `data` according to `cfg`.
///
/// Epochs are numbered from 1. Epochs `1..=warmup` train on plain
/// cross-entropy with un-rotated inputs. Detection runs at the end of
/// epoch `warmup` (before epoch 1 when there is no warm-up) and after every
/// later epoch; the λ from the pass ending epoch `e` weights epoch `e + 1`.
/// The elastic temperature is taken at `e − warmup` on a schedule of
/// `max_epochs − warmup` steps.
///
/// When `out` is given, the manifest, per-epoch metrics, detection dumps,
/// checkpoints and summary are written there as the run progresses.
pub fn run_training(cfg: &TrainConfig, data: &PreparedData, out: Option<&RunDirectory>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shape = cfg.arch.input;
    let train = subset(&data.train, cfg.subset)?;
    let val = subset(&data.val, cfg.val_subset)?;
    let test = subset(&data.test, cfg.test_subset)?;
    if train.is_empty() || val.is_empty() {
        return Err(NlabError::validation("training and validation sets must be non-empty"));
    }
    let stats = ChannelStats::from_records(&train, shape)?;
    let train_set = normalize(&train, &stats, shape, true)?;
    let val_set = normalize(&val, &stats, shape, false)?;
    let ids: Vec<u32> = train.iter().map(|r| r.id).collect();
    let is_noisy: Vec<bool> = train.iter().map(|r| r.is_noisy).collect();
    let n = train.len();
    let per = shape.len();

    if let Some(dir) = out {
        let mut kv = cfg.to_kv();
        kv.merge(&prefixed("prepare.", &data.spec.to_kv()));
        kv.set("derived.channel_stats", stats.encode());
        kv.set("derived.train_count", n);
        kv.set("derived.train_noisy", is_noisy.iter().filter(|&&b| b).count());
        kv.set("derived.val_count", val.len());
        kv.set("derived.test_count", if cfg.evaluate_test { test.len() } else { 0 });
        dir.write_manifest(&kv)?;
    }

    let mut net = TwoHeadNetwork::<f32>::new(cfg.arch.clone(), cfg.model_seed)?;
    let initial = net.clone();
    if let Some(dir) = out {
        dir.save_checkpoint("initial", &net)?;
    }
    let mut opt = Sgd::new(cfg.sgd.clone());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.sgd.seed);
    let mut rot_rng = ChaCha8Rng::seed_from_u64(cfg.rotation_seed);
    let mut order: Vec<usize> = (0..n).collect();

    let needs_detection = cfg.runs_detection();
    let feeds_lambda = cfg.lambda_from_detection();
    let mut lambdas = vec![cfg.fixed_lambda.unwrap_or(1.0); n];
    let det_cfg = cfg.detection_config();
    let mut passes = 0usize;

    // A failed or degenerate fit leaves λ as it was; non-finite
    // parameters while collecting statistics abort the run.
    let mut refresh = |net: &TwoHeadNetwork<f32>, epoch: usize, lambdas: &mut Vec<f64>| -> Result<Option<Refresh>> {
        let (stats, diag) = collect_stats(net, &train_set.images, &ids, &train_set.labels, epoch, cfg.eval_chunk)?;
        let schedule_epoch = epoch.saturating_sub(cfg.warmup_epochs);
        let pass = match run_detection(stats, diag.flagged_ids, &det_cfg, schedule_epoch) {
            Ok(p) => p,
            Err(e) => {
                warn!("epoch {epoch}: detection failed ({e}); keeping previous lambdas");
                return Ok(None);
            }
        };
        passes += 1;
        if feeds_lambda {
            if pass.degenerate() {
                warn!("epoch {epoch}: degenerate mixture fit; keeping previous lambdas");
            } else {
                for (l, p) in lambdas.iter_mut().zip(&pass.posteriors) {
                    *l = p.lambda;
                }
            }
        }
        if let Some(dir) = out {
            dump::write(
                &dir.detection_dump(epoch),
                &dump::rows(&pass.stats, &pass.posteriors, &is_noisy),
            )?;
        }
        let snapshot = snapshot(&pass, cfg, &is_noisy)?;
        Ok(Some(Refresh {
            snapshot,
            active_fraction: snapshot.fraction(cfg.decision),
        }))
    };

    if needs_detection && cfg.warmup_epochs == 0 {
        refresh(&net, 0, &mut lambdas)?;
    }

    let with_rotations = cfg.mode != TrainMode::Baseline;
    let mut reports = Vec::with_capacity(cfg.max_epochs);
    let mut batch_losses = Vec::with_capacity(cfg.max_epochs);
    let mut best: Vec<BestCheckpoint> = Vec::new();
    let protocols: &[PredictionProtocol] = if with_rotations {
        &PredictionProtocol::ALL
    } else {
        &[PredictionProtocol::OneImage]
    };

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let warm = epoch <= cfg.warmup_epochs;
        let rotate = cfg.mode.rotates() && !warm;
        order.shuffle(&mut order_rng);
        let mut losses = Vec::with_capacity(n.div_ceil(cfg.sgd.batch_size));
        let (mut class_sum, mut rot_sum) = (0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.sgd.batch_size).enumerate() {
            let m = chunk.len();
            let mut buf = vec![0f32; m * per];
            let mut rot_labels = vec![0usize; m];
            let mut class_labels = Vec::with_capacity(m);
            for (j, &i) in chunk.iter().enumerate() {
                let src = train_set.images.image(i);
                let dst = &mut buf[j * per..(j + 1) * per];
                if rotate {
                    let k = rot_rng.random_range(0..4u8);
                    rotate_image(src, shape, k, dst);
                    rot_labels[j] = k as usize;
                } else {
                    dst.copy_from_slice(src);
                }
                class_labels.push(train_set.labels[i]);
            }
            let batch_lambdas: Vec<f64> = chunk.iter().map(|&i| lambdas[i]).collect();
            let weights: LossWeights<f32> = match cfg.mode {
                _ if warm => LossWeights::class_only(m),
                TrainMode::Baseline | TrainMode::Augmentation => LossWeights::class_only(m),
                TrainMode::Regularization => regularization_weights(&batch_lambdas, cfg.reg_weight)?,
                TrainMode::Separation => separation_weights(&batch_lambdas, cfg.cutoff),
            };
            let batch = ImageBatch::new(shape, buf)?;
            let bundle = train_step(
                &mut net,
                &mut opt,
                &batch,
                &class_labels,
                &rot_labels,
                &weights,
                StepContext { epoch, batch: b },
            )?;
            class_sum += bundle.class_loss;
            rot_sum += bundle.rot_loss;
            losses.push(bundle.total);
        }

        let refreshed = if needs_detection && epoch >= cfg.warmup_epochs {
            refresh(&net, epoch, &mut lambdas)?
        } else {
            None
        };

        let (val_one, val_four) =
            accuracy_both(&net, &val_set.images, &val_set.labels, with_rotations, cfg.eval_chunk)?;
        for &p in protocols {
            let acc = if p == PredictionProtocol::OneImage {
                val_one
            } else {
                val_four.unwrap_or(0.0)
            };
            let slot = best.iter_mut().find(|b| b.protocol == p);
            let improved = slot.as_ref().is_none_or(|b| acc > b.val_accuracy);
            if improved {
                let entry = BestCheckpoint {
                    protocol: p,
                    epoch,
                    val_accuracy: acc,
                    network: net.clone(),
                };
                match slot {
                    Some(s) => *s = entry,
                    None => best.push(entry),
                }
                if let Some(dir) = out {
                    dir.save_checkpoint(&format!("best_{}", p.as_str()), &net)?;
                }
            }
        }

        let nb = losses.len() as f64;
        let report = EpochReport {
            epoch,
            train_loss: losses.iter().sum::<f64>() / nb,
            class_loss: class_sum / nb,
            rot_loss: rot_sum / nb,
            val_one_image: val_one,
            val_four_rotation: val_four,
            detection: refreshed.as_ref().map(|r| r.snapshot),
            predicted_clean_fraction: refreshed.as_ref().map(|r| r.active_fraction),
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}/{}: loss {:.4} val {:.2}{}",
            cfg.max_epochs,
            report.train_loss,
            val_one,
            val_four.map(|v| format!(" / {v:.2} (4-rot)")).unwrap_or_default()
        );
        if let Some(dir) = out {
            dir.append_metrics(&report)?;
        }
        reports.push(report);
        batch_losses.push(losses);
    }

    if let Some(dir) = out {
        dir.save_checkpoint("final", &net)?;
    }

    let best_of = |p: PredictionProtocol| best.iter().find(|b| b.protocol == p);
    let mut summary = RunSummary {
        name: cfg.display_name(),
        decision: cfg.mode.uses_lambda().then_some(cfg.decision),
        val_one_image: best_of(PredictionProtocol::OneImage).map(|b| b.val_accuracy),
        val_four_rotation: best_of(PredictionProtocol::FourRotation).map(|b| b.val_accuracy),
        test_one_image: None,
        test_four_rotation: None,
        final_test_one_image: None,
        final_test_four_rotation: None,
    };
    if cfg.evaluate_test && !test.is_empty() {
        let test_set = normalize(&test, &stats, shape, false)?;
        let eval = |net: &TwoHeadNetwork<f32>| {
            accuracy_both(net, &test_set.images, &test_set.labels, with_rotations, cfg.eval_chunk)
        };
        if let Some(b) = best_of(PredictionProtocol::OneImage) {
            summary.test_one_image = Some(eval(&b.network)?.0);
        }
        if let Some(b) = best_of(PredictionProtocol::FourRotation) {
            summary.test_four_rotation = eval(&b.network)?.1;
        }
        let (one, four) = eval(&net)?;
        summary.final_test_one_image = Some(one);
        summary.final_test_four_rotation = four;
    }
    if let Some(dir) = out {
        dir.write_summary(&summary)?;
    }

    Ok(TrainOutcome {
        network: net,
        initial,
        reports,
        summary,
        best,
        batch_losses,
        lambdas,
        train_ids: ids,
        channel_stats: stats,
        detection_passes: passes,
    })
}

fn prefixed(prefix: &str, kv: &crate::config::KvMap) -> crate::config::KvMap {
    let mut out = crate::config::KvMap::new();
    for k in kv.keys() {
        out.set(&format!("{prefix}{k}"), kv.get(k).unwrap_or_default());
    }
    out
}
