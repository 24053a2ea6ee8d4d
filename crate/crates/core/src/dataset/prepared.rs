//! A prepared dataset directory: split, noise-injected training set, clean
//! validation and test sets.
//!
//! ```text
//! train.bin            CIFAR-10 binary records with observed labels
//! val.bin, test.bin    CIFAR-10 binary records, clean
//! noise_manifest.csv   id,true_label,observed_label,is_noisy for train.bin rows
//! val_ids.csv          id per val.bin row
//! prepare.manifest     key = value description of how it was made
//! ```

use std::path::Path;

use super::cifar::{read_batch_file, write_batch_file};
use super::noise::{inject_noise, read_noise_manifest, write_noise_manifest, NoiseSummary, RelabelPolicy};
use super::split::{split, SplitSpec};
use super::SampleRecord;
use crate::config::{fmt_f64, KvMap};
use crate::error::{NlabError, Result};

pub const TRAIN_FILE: &str = "train.bin";
pub const VAL_FILE: &str = "val.bin";
pub const TEST_FILE: &str = "test.bin";
pub const NOISE_MANIFEST: &str = "noise_manifest.csv";
pub const VAL_IDS: &str = "val_ids.csv";
pub const PREPARE_MANIFEST: &str = "prepare.manifest";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareSpec {
    pub split: SplitSpec,
    pub noise_rate: f64,
    pub noise_seed: u64,
    pub policy: RelabelPolicy,
}

impl Default for PrepareSpec {
    fn default() -> Self {
        PrepareSpec {
            split: SplitSpec::default(),
            noise_rate: 0.0,
            noise_seed: 0,
            policy: RelabelPolicy::default(),
        }
    }
}

impl PrepareSpec {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("split.train_count", self.split.train_count);
        kv.set("split.val_count", self.split.val_count);
        kv.set("split.seed", self.split.seed);
        kv.set("split.stratified", self.split.stratified);
        kv.set("noise.rate", fmt_f64(self.noise_rate));
        kv.set("noise.seed", self.noise_seed);
        kv.set("noise.policy", self.policy.as_str());
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = PrepareSpec::default();
        let policy = match kv.get("noise.policy") {
            Some(p) => RelabelPolicy::parse(p)?,
            None => d.policy,
        };
        Ok(PrepareSpec {
            split: SplitSpec {
                train_count: kv.parse_or("split.train_count", d.split.train_count)?,
                val_count: kv.parse_or("split.val_count", d.split.val_count)?,
                seed: kv.parse_or("split.seed", d.split.seed)?,
                stratified: kv.parse_or("split.stratified", d.split.stratified)?,
            },
            noise_rate: kv.parse_or("noise.rate", d.noise_rate)?,
            noise_seed: kv.parse_or("noise.seed", d.noise_seed)?,
            policy,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub spec: PrepareSpec,
}

/// Splits `pool` and injects noise into the training part only.
pub fn prepare(
    pool: &[SampleRecord],
    test: Vec<SampleRecord>,
    spec: PrepareSpec,
) -> Result<(PreparedData, NoiseSummary)> {
    let (mut train, val) = split(pool, spec.split)?;
    let summary = inject_noise(&mut train, spec.noise_rate, spec.noise_seed, spec.policy)?;
    Ok((PreparedData { train, val, test, spec }, summary))
}

impl PreparedData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| NlabError::io(format!("creating {}", dir.display()), e))?;
        write_batch_file(&dir.join(TRAIN_FILE), &self.train)?;
        write_batch_file(&dir.join(VAL_FILE), &self.val)?;
        write_batch_file(&dir.join(TEST_FILE), &self.test)?;
        write_noise_manifest(&dir.join(NOISE_MANIFEST), &self.train)?;
        let path = dir.join(VAL_IDS);
        let ctx = || format!("writing {}", path.display());
        let mut w = csv::Writer::from_path(&path).map_err(|e| NlabError::csv(ctx(), e))?;
        w.write_record(["id"]).map_err(|e| NlabError::csv(ctx(), e))?;
        for r in &self.val {
            w.write_record([r.id.to_string()])
                .map_err(|e| NlabError::csv(ctx(), e))?;
        }
        w.flush().map_err(|e| NlabError::io(ctx(), e))?;
        let mut kv = self.spec.to_kv();
        kv.set("count.train", self.train.len());
        kv.set("count.val", self.val.len());
        kv.set("count.test", self.test.len());
        kv.set("count.noisy", self.train.iter().filter(|r| r.is_noisy).count());
        kv.write(&dir.join(PREPARE_MANIFEST))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let kv = KvMap::read(&dir.join(PREPARE_MANIFEST))?;
        let spec = PrepareSpec::from_kv(&kv)?;
        let mut train = read_batch_file(&dir.join(TRAIN_FILE), 0)?;
        let rows = read_noise_manifest(&dir.join(NOISE_MANIFEST))?;
        if rows.len() != train.len() {
            return Err(NlabError::validation(format!(
                "{}: {} manifest rows for {} training records",
                dir.display(),
                rows.len(),
                train.len()
            )));
        }
        for (r, &(id, truth, observed, noisy)) in train.iter_mut().zip(&rows) {
            if r.observed_label != observed || noisy != (truth != observed) {
                return Err(NlabError::validation(format!(
                    "{}: noise manifest disagrees with {TRAIN_FILE} at id {id}",
                    dir.display()
                )));
            }
            r.id = id;
            r.true_label = truth;
            r.is_noisy = noisy;
        }
        let mut val = read_batch_file(&dir.join(VAL_FILE), 0)?;
        let path = dir.join(VAL_IDS);
        let ctx = || format!("reading {}", path.display());
        let mut rd = csv::Reader::from_path(&path).map_err(|e| NlabError::csv(ctx(), e))?;
        let mut ids = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| NlabError::csv(ctx(), e))?;
            ids.push(
                rec[0]
                    .parse::<u32>()
                    .map_err(|_| NlabError::validation(format!("{}: bad id `{}`", ctx(), &rec[0])))?,
            );
        }
        if ids.len() != val.len() {
            return Err(NlabError::validation(format!(
                "{}: {} ids for {} validation records",
                dir.display(),
                ids.len(),
                val.len()
            )));
        }
        for (r, id) in val.iter_mut().zip(ids) {
            r.id = id;
        }
        let test = read_batch_file(&dir.join(TEST_FILE), 0)?;
        Ok(PreparedData { train, val, test, spec })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| SampleRecord::clean(i as u32, vec![(i % 256) as u8; 3072], (i % 10) as u8))
            .collect()
    }

    #[test]
    fn write_read_roundtrip() {
        let spec = PrepareSpec {
            split: SplitSpec {
                train_count: 40,
                val_count: 10,
                seed: 3,
                stratified: false,
            },
            noise_rate: 0.5,
            noise_seed: 9,
            policy: RelabelPolicy::ExcludeTrue,
        };
        let (data, summary) = prepare(&pool(60), pool(5), spec).unwrap();
        assert_eq!(summary.resampled, 20);
        assert_eq!(summary.noisy, 20);
        let dir = tempfile::tempdir().unwrap();
        data.write(dir.path()).unwrap();
        let back = PreparedData::read(dir.path()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn tampered_manifest_is_rejected() {
        let (data, _) = prepare(
            &pool(30),
            pool(2),
            PrepareSpec {
                split: SplitSpec {
                    train_count: 20,
                    val_count: 5,
                    seed: 0,
                    stratified: false,
                },
                noise_rate: 0.2,
                ..PrepareSpec::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.write(dir.path()).unwrap();
        let mut text = std::fs::read_to_string(dir.path().join(NOISE_MANIFEST)).unwrap();
        text.push_str("999,1,1,0\n");
        std::fs::write(dir.path().join(NOISE_MANIFEST), text).unwrap();
        assert!(PreparedData::read(dir.path()).is_err());
    }
}
