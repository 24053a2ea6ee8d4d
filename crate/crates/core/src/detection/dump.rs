//! Per-pass detection dump:
//! `epoch,id,ce_loss,confidence,p_loss,p_conf,lambda,is_clean,is_noisy_truth`.

use std::path::{Path, PathBuf};

use super::{CleanPosterior, PerSampleStats};
use crate::error::{NlabError, Result};

pub const HEADER: [&str; 9] = [
    "epoch",
    "id",
    "ce_loss",
    "confidence",
    "p_loss",
    "p_conf",
    "lambda",
    "is_clean",
    "is_noisy_truth",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpRow {
    pub epoch: usize,
    pub id: u32,
    pub ce_loss: f64,
    pub confidence: f64,
    pub p_loss: f64,
    pub p_conf: f64,
    pub lambda: f64,
    pub is_clean: bool,
    pub is_noisy_truth: bool,
}

pub fn file_name(epoch: usize) -> String {
    format!("detection_epoch_{epoch:04}.csv")
}

pub fn path_for(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join("detection").join(file_name(epoch))
}

pub fn rows(stats: &[PerSampleStats], posteriors: &[CleanPosterior], is_noisy: &[bool]) -> Vec<DumpRow> {
    stats
        .iter()
        .zip(posteriors)
        .zip(is_noisy)
        .map(|((s, p), &n)| DumpRow {
            epoch: s.epoch,
            id: s.id,
            ce_loss: s.ce_loss,
            confidence: s.confidence,
            p_loss: p.p_loss,
            p_conf: p.p_conf,
            lambda: p.lambda,
            is_clean: p.is_clean,
            is_noisy_truth: n,
        })
        .collect()
}

pub fn write(path: &Path, rows: &[DumpRow]) -> Result<()> {
    let ctx = || format!("detection dump {}", path.display());
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| NlabError::io(ctx(), e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| NlabError::csv(ctx(), e))?;
    w.write_record(HEADER).map_err(|e| NlabError::csv(ctx(), e))?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.id.to_string(),
            format!("{:.6}", r.ce_loss),
            format!("{:.6}", r.confidence),
            format!("{:.6}", r.p_loss),
            format!("{:.6}", r.p_conf),
            format!("{:.6}", r.lambda),
            u8::from(r.is_clean).to_string(),
            u8::from(r.is_noisy_truth).to_string(),
        ])
        .map_err(|e| NlabError::csv(ctx(), e))?;
    }
    w.flush().map_err(|e| NlabError::io(ctx(), e))
}

pub fn read(path: &Path) -> Result<Vec<DumpRow>> {
    let ctx = || format!("detection dump {}", path.display());
    let mut r = csv::Reader::from_path(path).map_err(|e| NlabError::csv(ctx(), e))?;
    let headers = r.headers().map_err(|e| NlabError::csv(ctx(), e))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(NlabError::validation(format!("{}: unexpected header", ctx())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| NlabError::csv(ctx(), e))?;
        let bad = || NlabError::validation(format!("{}: malformed row {rec:?}", ctx()));
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad()) };
        let b = |i: usize| -> Result<bool> {
            match &rec[i] {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(bad()),
            }
        };
        out.push(DumpRow {
            epoch: rec[0].parse().map_err(|_| bad())?,
            id: rec[1].parse().map_err(|_| bad())?,
            ce_loss: f(2)?,
            confidence: f(3)?,
            p_loss: f(4)?,
            p_conf: f(5)?,
            lambda: f(6)?,
            is_clean: b(7)?,
            is_noisy_truth: b(8)?,
        });
    }
    Ok(out)
}
