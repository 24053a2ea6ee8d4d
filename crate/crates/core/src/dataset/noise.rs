use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SampleRecord, NUM_CLASSES};
use crate::error::{NlabError, Result};

/// How a selected sample's new label is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelabelPolicy {
    /// Uniform over all ten classes; the draw may reproduce the true label.
    #[default]
    IncludeTrue,
    /// Uniform over the nine other classes.
    ExcludeTrue,
}

impl RelabelPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            RelabelPolicy::IncludeTrue => "include_true",
            RelabelPolicy::ExcludeTrue => "exclude_true",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "include_true" => Ok(RelabelPolicy::IncludeTrue),
            "exclude_true" => Ok(RelabelPolicy::ExcludeTrue),
            other => Err(NlabError::Config(format!("unknown relabel policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSummary {
    /// Samples whose label was redrawn, `round(r·N)`.
    pub resampled: usize,
    /// Samples whose observed label now differs from the truth.
    pub noisy: usize,
}

/// Redraws the observed label of exactly `round(rate·N)` uniformly chosen
/// samples.
pub fn inject_noise(train: &mut [SampleRecord], rate: f64, seed: u64, policy: RelabelPolicy) -> Result<NoiseSummary> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(NlabError::validation(format!("noise rate {rate} outside [0, 1]")));
    }
    let n = train.len();
    let k = (rate * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let r = &mut train[i];
        let label = match policy {
            RelabelPolicy::IncludeTrue => rng.random_range(0..NUM_CLASSES as u8),
            RelabelPolicy::ExcludeTrue => {
                let d = rng.random_range(1..NUM_CLASSES as u8);
                (r.true_label + d) % NUM_CLASSES as u8
            }
        };
        r.set_observed(label);
    }
    Ok(NoiseSummary {
        resampled: k,
        noisy: train.iter().filter(|r| r.is_noisy).count(),
    })
}

/// Audit CSV: `id,true_label,observed_label,is_noisy` (booleans as 0/1).
pub fn write_noise_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let ctx = || format!("noise manifest {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| NlabError::csv(ctx(), e))?;
    w.write_record(["id", "true_label", "observed_label", "is_noisy"])
        .map_err(|e| NlabError::csv(ctx(), e))?;
    for r in records {
        w.write_record([
            r.id.to_string(),
            r.true_label.to_string(),
            r.observed_label.to_string(),
            u8::from(r.is_noisy).to_string(),
        ])
        .map_err(|e| NlabError::csv(ctx(), e))?;
    }
    w.flush().map_err(|e| NlabError::io(ctx(), e))
}

/// Rows of `(id, true_label, observed_label, is_noisy)`.
pub fn read_noise_manifest(path: &Path) -> Result<Vec<(u32, u8, u8, bool)>> {
    let ctx = || format!("noise manifest {}", path.display());
    let mut r = csv::Reader::from_path(path).map_err(|e| NlabError::csv(ctx(), e))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| NlabError::csv(ctx(), e))?;
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| NlabError::validation(format!("{}: short row", ctx())))
        };
        let parse_err = |_| NlabError::validation(format!("{}: malformed row {row:?}", ctx()));
        let id: u32 = field(0)?.parse().map_err(parse_err)?;
        let t: u8 = field(1)?.parse().map_err(parse_err)?;
        let o: u8 = field(2)?.parse().map_err(parse_err)?;
        let noisy = match field(3)? {
            "1" => true,
            "0" => false,
            _ => return Err(NlabError::validation(format!("{}: bad is_noisy", ctx()))),
        };
        out.push((id, t, o, noisy));
    }
    Ok(out)
}
