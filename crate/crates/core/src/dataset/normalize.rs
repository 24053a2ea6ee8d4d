use super::SampleRecord;
use crate::error::{NlabError, Result};
use crate::nn::{ImageBatch, InputShape, Real};

/// Per-channel mean and standard deviation of `pixel / 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn from_records(records: &[SampleRecord], shape: InputShape) -> Result<Self> {
        if records.is_empty() {
            return Err(NlabError::validation("cannot compute channel statistics of no images"));
        }
        let plane = shape.height * shape.width;
        let mut sum = vec![0.0f64; shape.channels];
        let mut sq = vec![0.0f64; shape.channels];
        for r in records {
            if r.image.len() != shape.len() {
                return Err(NlabError::Shape {
                    expected: format!("{} pixel bytes", shape.len()),
                    actual: format!("{}", r.image.len()),
                });
            }
            for c in 0..shape.channels {
                // integer sums are exact and order independent
                let (mut s, mut q) = (0u64, 0u64);
                for &p in &r.image[c * plane..(c + 1) * plane] {
                    s += p as u64;
                    q += (p as u64) * (p as u64);
                }
                sum[c] += s as f64;
                sq[c] += q as f64;
            }
        }
        let count = (records.len() * plane) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count / 255.0).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = q / count / (255.0 * 255.0) - m * m;
                var.max(0.0).sqrt().max(1e-6)
            })
            .collect();
        Ok(ChannelStats { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Writes `(x/255 − mean)/std` for one image into `out`.
    pub fn normalize_into<F: Real>(&self, image: &[u8], shape: InputShape, out: &mut [F]) {
        let plane = shape.height * shape.width;
        for c in 0..shape.channels {
            let scale = 1.0 / (255.0 * self.std[c]);
            let shift = self.mean[c] / self.std[c];
            let table: Vec<F> = (0..256).map(|p| F::from_f64_lossy(p as f64 * scale - shift)).collect();
            for (o, &p) in out[c * plane..(c + 1) * plane]
                .iter_mut()
                .zip(&image[c * plane..(c + 1) * plane])
            {
                *o = table[p as usize];
            }
        }
    }

    pub fn batch<'a, F: Real>(
        &self,
        images: impl IntoIterator<Item = &'a [u8]>,
        shape: InputShape,
    ) -> Result<ImageBatch<F>> {
        let mut data = Vec::new();
        let mut scratch = vec![F::zero(); shape.len()];
        for img in images {
            if img.len() != shape.len() {
                return Err(NlabError::Shape {
                    expected: format!("{} pixel bytes", shape.len()),
                    actual: format!("{}", img.len()),
                });
            }
            self.normalize_into(img, shape, &mut scratch);
            data.extend_from_slice(&scratch);
        }
        ImageBatch::new(shape, data)
    }

    /// `m0,m1,m2;s0,s1,s2` with round-trippable floats.
    pub fn encode(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        format!("{};{}", join(&self.mean), join(&self.std))
    }

    pub fn decode(text: &str) -> Result<Self> {
        let bad = || NlabError::Config(format!("malformed channel stats `{text}`"));
        let (m, s) = text.split_once(';').ok_or_else(bad)?;
        let parse = |part: &str| -> Result<Vec<f64>> {
            part.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect()
        };
        let (mean, std) = (parse(m)?, parse(s)?);
        if mean.len() != std.len() || std.iter().any(|v| *v <= 0.0) {
            return Err(bad());
        }
        Ok(ChannelStats { mean, std })
    }
}
