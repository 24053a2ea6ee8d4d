//! CSV tables: per-epoch series (the `metrics.csv` layout) and a summary
//! with one row per model variant and validation/test × protocol columns.
//! Floats are written with 6 decimals; missing values are blank.
//!
//! A report directory holds `summary.csv` and `series/<model>.csv`.

use std::path::{Path, PathBuf};

use crate::detection::DecisionStrategy;
use crate::error::{NlabError, Result};
use crate::trainer::{DetectionSnapshot, EpochReport};

pub const METRICS_HEADER: [&str; 14] = [
    "epoch",
    "train_loss",
    "class_loss",
    "rot_loss",
    "val_acc_one_image",
    "val_acc_four_rotation",
    "clean_acc_loss_only",
    "clean_acc_hard",
    "clean_acc_elastic",
    "clean_frac_loss_only",
    "clean_frac_hard",
    "clean_frac_elastic",
    "predicted_clean_fraction",
    "wall_time_s",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "model",
    "decision",
    "val_one_image",
    "val_four_rotation",
    "test_one_image",
    "test_four_rotation",
    "final_test_one_image",
    "final_test_four_rotation",
];

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SERIES_DIR: &str = "series";

/// One row of the summary table. Accuracies are percentages; test columns
/// are measured on the checkpoint with the best validation accuracy under
/// the same protocol, `final_*` on the last epoch's network.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    /// `None` for modes that do not use λ.
    pub decision: Option<DecisionStrategy>,
    pub val_one_image: Option<f64>,
    pub val_four_rotation: Option<f64>,
    pub test_one_image: Option<f64>,
    pub test_four_rotation: Option<f64>,
    pub final_test_one_image: Option<f64>,
    pub final_test_four_rotation: Option<f64>,
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| NlabError::validation(format!("bad {what} value `{s}`")))
}

fn parse_req(s: &str, what: &str) -> Result<f64> {
    parse_opt(s, what)?.ok_or_else(|| NlabError::validation(format!("missing {what}")))
}

pub fn metrics_record(r: &EpochReport) -> Vec<String> {
    let det = |f: &dyn Fn(&DetectionSnapshot) -> f64| opt(r.detection.as_ref().map(f));
    vec![
        r.epoch.to_string(),
        f6(r.train_loss),
        f6(r.class_loss),
        f6(r.rot_loss),
        f6(r.val_one_image),
        opt(r.val_four_rotation),
        det(&|d| d.clean_accuracy[0]),
        det(&|d| d.clean_accuracy[1]),
        det(&|d| d.clean_accuracy[2]),
        det(&|d| d.clean_fraction[0]),
        det(&|d| d.clean_fraction[1]),
        det(&|d| d.clean_fraction[2]),
        opt(r.predicted_clean_fraction),
        f6(r.wall_time_s),
    ]
}

fn parse_metrics_record(rec: &csv::StringRecord) -> Result<EpochReport> {
    if rec.len() != METRICS_HEADER.len() {
        return Err(NlabError::validation(format!("metrics row has {} fields", rec.len())));
    }
    let det: Vec<Option<f64>> = (6..12)
        .map(|i| parse_opt(&rec[i], METRICS_HEADER[i]))
        .collect::<Result<_>>()?;
    let detection = if det.iter().all(Option::is_some) {
        Some(DetectionSnapshot {
            clean_accuracy: [det[0].unwrap(), det[1].unwrap(), det[2].unwrap()],
            clean_fraction: [det[3].unwrap(), det[4].unwrap(), det[5].unwrap()],
        })
    } else if det.iter().all(Option::is_none) {
        None
    } else {
        return Err(NlabError::validation("partially filled detection columns"));
    };
    Ok(EpochReport {
        epoch: rec[0]
            .parse()
            .map_err(|_| NlabError::validation(format!("bad epoch `{}`", &rec[0])))?,
        train_loss: parse_req(&rec[1], "train_loss")?,
        class_loss: parse_req(&rec[2], "class_loss")?,
        rot_loss: parse_req(&rec[3], "rot_loss")?,
        val_one_image: parse_req(&rec[4], "val_acc_one_image")?,
        val_four_rotation: parse_opt(&rec[5], "val_acc_four_rotation")?,
        detection,
        predicted_clean_fraction: parse_opt(&rec[12], "predicted_clean_fraction")?,
        wall_time_s: parse_req(&rec[13], "wall_time_s")?,
    })
}

fn check_header(r: &mut csv::Reader<std::fs::File>, expected: &[&str], ctx: &str) -> Result<()> {
    let headers = r.headers().map_err(|e| NlabError::csv(ctx, e))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(NlabError::validation(format!("{ctx}: unexpected header")));
    }
    Ok(())
}

pub fn write_metrics(path: &Path, reports: &[EpochReport]) -> Result<()> {
    let ctx = format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| NlabError::csv(&ctx, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| NlabError::csv(&ctx, e))?;
    for r in reports {
        w.write_record(metrics_record(r)).map_err(|e| NlabError::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| NlabError::io(&ctx, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochReport>> {
    let ctx = format!("reading {}", path.display());
    let mut r = csv::Reader::from_path(path).map_err(|e| NlabError::csv(&ctx, e))?;
    check_header(&mut r, &METRICS_HEADER, &ctx)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| NlabError::csv(&ctx, e))?;
            parse_metrics_record(&rec).map_err(|e| NlabError::validation(format!("{ctx}: {e}")))
        })
        .collect()
}

fn summary_record(s: &RunSummary) -> Vec<String> {
    vec![
        s.name.clone(),
        s.decision.map(|d| d.as_str().to_string()).unwrap_or_default(),
        opt(s.val_one_image),
        opt(s.val_four_rotation),
        opt(s.test_one_image),
        opt(s.test_four_rotation),
        opt(s.final_test_one_image),
        opt(s.final_test_four_rotation),
    ]
}

pub fn write_summaries(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let ctx = format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| NlabError::csv(&ctx, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| NlabError::csv(&ctx, e))?;
    for s in rows {
        w.write_record(summary_record(s)).map_err(|e| NlabError::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| NlabError::io(&ctx, e))
}

pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>> {
    let ctx = format!("reading {}", path.display());
    let mut r = csv::Reader::from_path(path).map_err(|e| NlabError::csv(&ctx, e))?;
    check_header(&mut r, &SUMMARY_HEADER, &ctx)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| NlabError::csv(&ctx, e))?;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(NlabError::validation(format!("{ctx}: row has {} fields", rec.len())));
        }
        let decision = match &rec[1] {
            "" => None,
            d => Some(DecisionStrategy::parse(d)?),
        };
        let f = |i: usize| parse_opt(&rec[i], SUMMARY_HEADER[i]);
        out.push(RunSummary {
            name: rec[0].to_string(),
            decision,
            val_one_image: f(2)?,
            val_four_rotation: f(3)?,
            test_one_image: f(4)?,
            test_four_rotation: f(5)?,
            final_test_one_image: f(6)?,
            final_test_four_rotation: f(7)?,
        });
    }
    Ok(out)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Makes names unique by suffixing later duplicates with `-2`, `-3`, ...
fn unique_names<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut taken = std::collections::HashSet::new();
    names
        .map(|n| {
            let base = file_stem(n);
            let mut candidate = base.clone();
            let mut k = 2;
            while !taken.insert(candidate.clone()) {
                candidate = format!("{base}-{k}");
                k += 1;
            }
            candidate
        })
        .collect()
}

/// Writes `summary.csv` and one series file per run into `dir`.
pub fn build_report(runs: &[(RunSummary, Vec<EpochReport>)], dir: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(NlabError::validation("a report needs at least one run"));
    }
    let series_dir = dir.join(SERIES_DIR);
    std::fs::create_dir_all(&series_dir).map_err(|e| NlabError::io(format!("creating {}", series_dir.display()), e))?;
    let names = unique_names(runs.iter().map(|(s, _)| s.name.as_str()));
    let mut summaries = Vec::with_capacity(runs.len());
    let mut written = Vec::with_capacity(runs.len() + 1);
    for ((summary, reports), name) in runs.iter().zip(&names) {
        let path = series_dir.join(format!("{name}.csv"));
        write_metrics(&path, reports)?;
        written.push(path);
        summaries.push(RunSummary {
            name: name.clone(),
            ..summary.clone()
        });
    }
    let path = dir.join(SUMMARY_FILE);
    write_summaries(&path, &summaries)?;
    written.insert(0, path);
    Ok(written)
}

/// Reads a directory written by [`build_report`].
pub fn read_report(dir: &Path) -> Result<Vec<(RunSummary, Vec<EpochReport>)>> {
    read_summaries(&dir.join(SUMMARY_FILE))?
        .into_iter()
        .map(|s| {
            let series = read_metrics(&dir.join(SERIES_DIR).join(format!("{}.csv", s.name)))?;
            Ok((s, series))
        })
        .collect()
}
