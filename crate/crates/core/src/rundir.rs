//! Layout of one training run on disk.
//!
//! ```text
//! run.manifest                 resolved settings, seeds, data provenance
//! metrics.csv                  one row per completed epoch
//! detection/detection_epoch_NNNN.csv
//! checkpoints/{initial,final,best_one_image,best_four_rotation}.nlab
//! summary.csv                  one summary row, written at the end
//! ```

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use crate::config::KvMap;
use crate::detection::dump;
use crate::error::{NlabError, Result};
use crate::evaluation::report::{metrics_record, read_metrics, read_summaries, write_metrics, write_summaries};
use crate::evaluation::RunSummary;
use crate::nn::{checkpoint, TwoHeadNetwork};
use crate::trainer::EpochReport;

pub const MANIFEST: &str = "run.manifest";
pub const METRICS: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.csv";
pub const CHECKPOINTS: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDirectory {
    path: PathBuf,
}

impl RunDirectory {
    /// Creates a fresh run directory at `path`. If `path` already holds a
    /// run, the first free `path-2`, `path-3`, ... is used instead.
    pub fn create(path: &Path) -> Result<Self> {
        let mut candidate = path.to_path_buf();
        let mut k = 2;
        while candidate.join(MANIFEST).exists() {
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(format!("-{k}"));
            candidate = path.with_file_name(name);
            k += 1;
        }
        std::fs::create_dir_all(candidate.join(CHECKPOINTS))
            .map_err(|e| NlabError::io(format!("creating {}", candidate.display()), e))?;
        Ok(RunDirectory { path: candidate })
    }

    /// Opens an existing run.
    pub fn open(path: &Path) -> Result<Self> {
        if !path.join(MANIFEST).is_file() {
            return Err(NlabError::validation(format!(
                "{} is not a run directory (no {MANIFEST})",
                path.display()
            )));
        }
        Ok(RunDirectory {
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path.join(MANIFEST)
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.path.join(METRICS)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.path.join(SUMMARY)
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.path.join(CHECKPOINTS).join(format!("{name}.nlab"))
    }

    pub fn detection_dump(&self, epoch: usize) -> PathBuf {
        dump::path_for(&self.path, epoch)
    }

    /// Epochs with a detection dump, ascending.
    pub fn detection_epochs(&self) -> Result<Vec<usize>> {
        let dir = self.path.join("detection");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| NlabError::io(format!("listing {}", dir.display()), e))? {
            let entry = entry.map_err(|e| NlabError::io(format!("listing {}", dir.display()), e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(e) = name
                .strip_prefix("detection_epoch_")
                .and_then(|r| r.strip_suffix(".csv"))
                .and_then(|r| r.parse().ok())
            {
                out.push(e);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Writes the manifest and an empty metrics table.
    pub fn write_manifest(&self, kv: &KvMap) -> Result<()> {
        kv.write(&self.manifest_path())?;
        write_metrics(&self.metrics_path(), &[])
    }

    pub fn read_manifest(&self) -> Result<KvMap> {
        KvMap::read(&self.manifest_path())
    }

    pub fn append_metrics(&self, report: &EpochReport) -> Result<()> {
        let path = self.metrics_path();
        let ctx = format!("appending to {}", path.display());
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| NlabError::io(&ctx, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.write_record(metrics_record(report))
            .map_err(|e| NlabError::csv(&ctx, e))?;
        w.flush().map_err(|e| NlabError::io(&ctx, e))
    }

    pub fn read_metrics(&self) -> Result<Vec<EpochReport>> {
        read_metrics(&self.metrics_path())
    }

    pub fn save_checkpoint(&self, name: &str, net: &TwoHeadNetwork<f32>) -> Result<()> {
        checkpoint::save(net, &self.checkpoint_path(name))
    }

    pub fn load_checkpoint(&self, name: &str) -> Result<TwoHeadNetwork<f32>> {
        checkpoint::load(&self.checkpoint_path(name))
    }

    pub fn write_summary(&self, summary: &RunSummary) -> Result<()> {
        write_summaries(&self.summary_path(), std::slice::from_ref(summary))
    }

    pub fn read_summary(&self) -> Result<RunSummary> {
        let mut rows = read_summaries(&self.summary_path())?;
        if rows.len() != 1 {
            return Err(NlabError::validation(format!(
                "{}: expected one summary row, found {}",
                self.summary_path().display(),
                rows.len()
            )));
        }
        Ok(rows.remove(0))
    }
}
