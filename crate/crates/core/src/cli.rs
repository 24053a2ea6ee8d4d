//! Command implementations behind the `nlab` binary.

use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::config::KvMap;
use crate::dataset::{load_cifar10, prepare, NoiseSummary, PrepareSpec, PreparedData};
use crate::detection::{decide, detection_metrics, dump, DecisionStrategy, DetectionMetrics};
use crate::error::{NlabError, Result};
use crate::evaluation::{build_report, RunSummary};
use crate::rundir::RunDirectory;
use crate::trainer::{run_training, EpochReport, TrainConfig, TrainOutcome};

/// Default dataset directory when none is given on the command line.
pub const DATA_DIR_ENV: &str = "NLAB_DATA_DIR";

/// Resolves settings from an optional file plus `key=value` overrides,
/// applied in order.
pub fn resolve_settings(config: Option<&Path>, overrides: &[String]) -> Result<KvMap> {
    let mut kv = match config {
        Some(p) => KvMap::read(p)?,
        None => KvMap::new(),
    };
    for o in overrides {
        kv.apply_override(o)?;
    }
    Ok(kv)
}

/// Splits the dataset at `data_dir`, injects label noise and writes the
/// prepared directory.
pub fn cmd_prepare(data_dir: &Path, out: &Path, spec: PrepareSpec) -> Result<NoiseSummary> {
    let (pool, test) = load_cifar10(data_dir)?;
    let (data, summary) = prepare(&pool, test, spec)?;
    data.write(out)?;
    info!(
        "prepared {} train / {} val / {} test into {} ({} labels redrawn, {} noisy)",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        out.display(),
        summary.resampled,
        summary.noisy
    );
    Ok(summary)
}

/// Trains per `cfg` on the prepared data named by `data.dir`, writing the
/// run into `out` (suffixed if it already holds a run).
pub fn cmd_train(mut cfg: TrainConfig, out: &Path) -> Result<(RunDirectory, TrainOutcome)> {
    let dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| NlabError::Config("no prepared data: set data.dir".into()))?;
    let data = PreparedData::read(&dir)?;
    if cfg.noise_rate != data.spec.noise_rate {
        info!("noise_rate taken from prepared data: {}", data.spec.noise_rate);
        cfg.noise_rate = data.spec.noise_rate;
    }
    let run = RunDirectory::create(out)?;
    info!("run directory {}", run.path().display());
    let outcome = run_training(&cfg, &data, Some(&run))?;
    Ok((run, outcome))
}

/// Recomputes clean-call metrics for every strategy from the posteriors
/// stored in one detection dump, and writes them next to the run as
/// `detect_eval_epoch_NNNN.csv`.
pub fn cmd_detect_eval(run_dir: &Path, epoch: usize) -> Result<(Vec<(DecisionStrategy, DetectionMetrics)>, PathBuf)> {
    let run = RunDirectory::open(run_dir)?;
    let cfg = TrainConfig::from_kv(&run.read_manifest()?)?;
    let path = run.detection_dump(epoch);
    if !path.is_file() {
        return Err(NlabError::validation(format!(
            "no detection dump for epoch {epoch} in {}",
            run_dir.display()
        )));
    }
    let rows = dump::read(&path)?;
    if rows.is_empty() {
        return Err(NlabError::validation(format!("{} has no rows", path.display())));
    }
    let schedule = cfg.schedule();
    let schedule_epoch = epoch.saturating_sub(cfg.warmup_epochs);
    let truth: Vec<bool> = rows.iter().map(|r| r.is_noisy_truth).collect();
    let mut results = Vec::new();
    for s in DecisionStrategy::ALL {
        let calls: Vec<bool> = rows
            .iter()
            .map(|r| decide(s, r.p_loss, r.p_conf, &schedule, schedule_epoch).1)
            .collect();
        results.push((s, detection_metrics(&calls, &truth)?));
    }
    let out = run.path().join(format!("detect_eval_epoch_{epoch:04}.csv"));
    let ctx = format!("writing {}", out.display());
    let mut w = csv::Writer::from_path(&out).map_err(|e| NlabError::csv(&ctx, e))?;
    w.write_record([
        "strategy",
        "clean_prediction_accuracy",
        "predicted_clean_fraction",
        "true_clean",
        "false_clean",
        "true_noisy",
        "false_noisy",
    ])
    .map_err(|e| NlabError::csv(&ctx, e))?;
    for (s, m) in &results {
        w.write_record([
            s.as_str().to_string(),
            format!("{:.6}", m.clean_prediction_accuracy),
            format!("{:.6}", m.predicted_clean_fraction),
            m.true_clean.to_string(),
            m.false_clean.to_string(),
            m.true_noisy.to_string(),
            m.false_noisy.to_string(),
        ])
        .map_err(|e| NlabError::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| NlabError::io(&ctx, e))?;
    Ok((results, out))
}

/// Collects every completed run among `run_dirs` into a report in `out`.
/// Directories that are not completed runs are skipped with a warning.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let mut runs: Vec<(RunSummary, Vec<EpochReport>)> = Vec::new();
    for d in run_dirs {
        let loaded = RunDirectory::open(d).and_then(|r| Ok((r.read_summary()?, r.read_metrics()?)));
        match loaded {
            Ok(run) => runs.push(run),
            Err(e) => warn!("skipping {}: {e}", d.display()),
        }
    }
    if runs.is_empty() {
        return Err(NlabError::validation("no completed runs to report"));
    }
    build_report(&runs, out)
}
