//! CIFAR-10 binary batch files: records of one label byte followed by
//! 3072 pixel bytes (1024 R, 1024 G, 1024 B; 32×32 row-major).

use std::fs;
use std::path::{Path, PathBuf};

use super::SampleRecord;
use crate::error::{NlabError, Result};

pub const IMAGE_BYTES: usize = 3072;
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// Parses the records of one batch file; ids start at `first_id`.
pub fn parse_records(bytes: &[u8], path: &Path, first_id: u32) -> Result<Vec<SampleRecord>> {
    if bytes.is_empty() {
        return Err(NlabError::Ingestion {
            path: path.to_path_buf(),
            offset: 0,
            reason: "empty file".into(),
        });
    }
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        let whole = bytes.len() / RECORD_BYTES;
        return Err(NlabError::Ingestion {
            path: path.to_path_buf(),
            offset: (whole * RECORD_BYTES) as u64,
            reason: format!(
                "truncated record: {} trailing bytes, records are {RECORD_BYTES} bytes",
                bytes.len() % RECORD_BYTES
            ),
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label >= 10 {
                return Err(NlabError::Ingestion {
                    path: path.to_path_buf(),
                    offset: (i * RECORD_BYTES) as u64,
                    reason: format!("label byte {label} outside [0, 10)"),
                });
            }
            Ok(SampleRecord::clean(first_id + i as u32, rec[1..].to_vec(), label))
        })
        .collect()
}

pub fn read_batch_file(path: &Path, first_id: u32) -> Result<Vec<SampleRecord>> {
    let bytes = fs::read(path).map_err(|e| NlabError::Ingestion {
        path: path.to_path_buf(),
        offset: 0,
        reason: e.to_string(),
    })?;
    parse_records(&bytes, path, first_id)
}

/// Writes records in CIFAR-10 binary layout using their observed labels.
pub fn write_batch_file(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut out = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        if r.image.len() != IMAGE_BYTES {
            return Err(NlabError::validation(format!(
                "record {} has {} pixel bytes, CIFAR-10 needs {IMAGE_BYTES}",
                r.id,
                r.image.len()
            )));
        }
        out.push(r.observed_label);
        out.extend_from_slice(&r.image);
    }
    fs::write(path, out).map_err(|e| NlabError::io(format!("writing {}", path.display()), e))
}

fn batch_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if !dir.join(TRAIN_FILES[0]).exists() && nested.join(TRAIN_FILES[0]).exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Loads the five training batches (ids 0..) and the test batch (ids 0..).
///
/// `dir` may be the extracted `cifar-10-batches-bin` directory or its parent.
pub fn load_cifar10(dir: &Path) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let dir = batch_dir(dir);
    let mut pool = Vec::new();
    for name in TRAIN_FILES {
        let recs = read_batch_file(&dir.join(name), pool.len() as u32)?;
        pool.extend(recs);
    }
    let test = read_batch_file(&dir.join(TEST_FILE), 0)?;
    Ok((pool, test))
}
