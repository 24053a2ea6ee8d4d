//! Procedural stand-in for CIFAR-10 when the real batches are unavailable.
//!
//! Each class owns a few coloured Gaussian blobs at fixed, asymmetric
//! positions, so the images have a canonical orientation and rotation
//! prediction is learnable. Samples jitter the blobs, add class-independent
//! distractor blobs, a random background gradient and pixel noise. Output is
//! written in the standard binary batch layout so it flows through
//! [`load_cifar10`](super::load_cifar10) unchanged.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cifar::{write_batch_file, IMAGE_BYTES, TEST_FILE, TRAIN_FILES};
use super::{SampleRecord, NUM_CLASSES};
use crate::error::{NlabError, Result};

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Records per training batch file (five files).
    pub per_train_file: usize,
    pub test_count: usize,
    /// Scales positional jitter, distractors and pixel noise.
    pub difficulty: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            per_train_file: 10_000,
            test_count: 10_000,
            difficulty: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    y: f64,
    x: f64,
    sigma: f64,
    color: [f64; 3],
}

fn class_prototypes(seed: u64) -> Vec<Vec<Blob>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0000_05ee_dc1a_55e5);
    (0..NUM_CLASSES)
        .map(|_| {
            (0..3)
                .map(|_| Blob {
                    y: rng.random_range(6.0..26.0),
                    x: rng.random_range(6.0..26.0),
                    sigma: rng.random_range(2.0..4.5),
                    color: [
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ],
                })
                .collect()
        })
        .collect()
}

fn paint(canvas: &mut [f64], blob: &Blob, amplitude: f64) {
    let inv = 1.0 / (2.0 * blob.sigma * blob.sigma);
    let reach = (3.0 * blob.sigma).ceil() as isize;
    let (cy, cx) = (blob.y.round() as isize, blob.x.round() as isize);
    for y in (cy - reach).max(0)..(cy + reach + 1).min(SIDE as isize) {
        for x in (cx - reach).max(0)..(cx + reach + 1).min(SIDE as isize) {
            let d2 = (y as f64 - blob.y).powi(2) + (x as f64 - blob.x).powi(2);
            let g = amplitude * (-d2 * inv).exp();
            let i = y as usize * SIDE + x as usize;
            for c in 0..3 {
                canvas[c * PLANE + i] += g * blob.color[c];
            }
        }
    }
}

fn render<R: Rng>(protos: &[Blob], difficulty: f64, rng: &mut R, noise: &Normal<f64>) -> Vec<u8> {
    let mut canvas = vec![0.0f64; IMAGE_BYTES];
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.7));
    let (gy, gx) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    for c in 0..3 {
        for y in 0..SIDE {
            for x in 0..SIDE {
                let t = (y as f64 / (SIDE - 1) as f64 - 0.5) * gy + (x as f64 / (SIDE - 1) as f64 - 0.5) * gx;
                canvas[c * PLANE + y * SIDE + x] = base[c] + t;
            }
        }
    }
    let shift = 3.0 * difficulty;
    let (dy, dx) = (rng.random_range(-shift..=shift), rng.random_range(-shift..=shift));
    let amplitude = rng.random_range(0.7..1.3);
    for b in protos {
        let jitter = 1.5 * difficulty;
        let blob = Blob {
            y: b.y + dy + rng.random_range(-jitter..=jitter),
            x: b.x + dx + rng.random_range(-jitter..=jitter),
            sigma: b.sigma * rng.random_range(0.8..1.2),
            color: b.color.map(|v| v + rng.random_range(-0.1..0.1)),
        };
        paint(&mut canvas, &blob, amplitude);
    }
    let distractors = (2.0 * difficulty).round() as usize;
    for _ in 0..distractors {
        let blob = Blob {
            y: rng.random_range(0.0..SIDE as f64),
            x: rng.random_range(0.0..SIDE as f64),
            sigma: rng.random_range(1.5..4.0),
            color: std::array::from_fn(|_| rng.random_range(-0.4..0.4)),
        };
        paint(&mut canvas, &blob, 1.0);
    }
    canvas
        .iter()
        .map(|v| {
            let p = v + difficulty * noise.sample(rng);
            (p.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect()
}

/// Generates `(train_pool, test)` with balanced, cyclic labels.
pub fn generate(spec: SyntheticSpec) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    if !(spec.difficulty >= 0.0 && spec.difficulty.is_finite()) {
        return Err(NlabError::validation("difficulty must be finite and non-negative"));
    }
    let protos = class_prototypes(spec.seed);
    let noise = Normal::new(0.0, 0.08).expect("valid normal");
    let make = |count: usize, stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        (0..count)
            .map(|i| {
                let label = (i % NUM_CLASSES) as u8;
                let img = render(&protos[label as usize], spec.difficulty, &mut rng, &noise);
                SampleRecord::clean(i as u32, img, label)
            })
            .collect::<Vec<_>>()
    };
    Ok((make(5 * spec.per_train_file, 1), make(spec.test_count, 2)))
}

/// Writes `data_batch_{1..5}.bin` and `test_batch.bin` into `dir`.
pub fn write_cifar_dir(dir: &Path, spec: SyntheticSpec) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| NlabError::io(format!("creating {}", dir.display()), e))?;
    let (pool, test) = generate(spec)?;
    for (chunk, name) in pool.chunks(spec.per_train_file.max(1)).zip(TRAIN_FILES) {
        write_batch_file(&dir.join(name), chunk)?;
    }
    write_batch_file(&dir.join(TEST_FILE), &test)
}
