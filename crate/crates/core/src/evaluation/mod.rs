//! Prediction protocols, accuracy, and report tables.

pub mod report;

pub use report::{build_report, read_report, RunSummary};

use crate::dataset::rotate_image;
use crate::error::{NlabError, Result};
use crate::nn::{softmax_rows, ImageBatch, InputShape, Real, TwoHeadNetwork, CLASS_OUTPUTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionProtocol {
    /// Class softmax of the un-rotated image.
    OneImage,
    /// Mean of the class softmax over the four quarter-turn rotations.
    FourRotation,
}

impl PredictionProtocol {
    pub const ALL: [PredictionProtocol; 2] = [PredictionProtocol::OneImage, PredictionProtocol::FourRotation];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionProtocol::OneImage => "one_image",
            PredictionProtocol::FourRotation => "four_rotation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one_image" => Ok(PredictionProtocol::OneImage),
            "four_rotation" => Ok(PredictionProtocol::FourRotation),
            other => Err(NlabError::Config(format!("unknown prediction protocol `{other}`"))),
        }
    }
}

fn check_square(shape: InputShape) -> Result<()> {
    if shape.height != shape.width {
        return Err(NlabError::Shape {
            expected: "square images for four-rotation prediction".into(),
            actual: format!("{}x{}", shape.height, shape.width),
        });
    }
    Ok(())
}

fn f64_softmax<F: Real>(logits: &[F]) -> Vec<f64> {
    let wide: Vec<f64> = logits.iter().map(|v| v.to_f64_lossy()).collect();
    softmax_rows(&wide, CLASS_OUTPUTS)
}

/// Class distributions under both protocols, computed from a single set of
/// forward passes. Returns `(one_image, four_rotation)`, each `n × 10`
/// row-major; the second is `None` when `with_rotations` is false.
pub fn class_probabilities<F: Real>(
    net: &TwoHeadNetwork<F>,
    images: &ImageBatch<F>,
    with_rotations: bool,
    chunk: usize,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if with_rotations {
        check_square(images.shape)?;
    }
    let per = images.shape.len();
    let chunk = chunk.max(1);
    let mut one = Vec::with_capacity(images.count * CLASS_OUTPUTS);
    let mut four = with_rotations.then(|| Vec::with_capacity(images.count * CLASS_OUTPUTS));
    for start in (0..images.count).step_by(chunk) {
        let end = (start + chunk).min(images.count);
        let m = end - start;
        let src = &images.data[start * per..end * per];
        if let Some(four) = four.as_mut() {
            // rotation k of image i sits at row k·m + i
            let mut data = vec![F::zero(); 4 * m * per];
            for k in 0..4u8 {
                for i in 0..m {
                    let at = (k as usize * m + i) * per;
                    rotate_image(&src[i * per..(i + 1) * per], images.shape, k, &mut data[at..at + per]);
                }
            }
            let logits = net.forward(&ImageBatch::new(images.shape, data)?)?;
            let probs = f64_softmax(&logits.class);
            one.extend_from_slice(&probs[..m * CLASS_OUTPUTS]);
            for i in 0..m {
                for c in 0..CLASS_OUTPUTS {
                    let s: f64 = (0..4).map(|k| probs[(k * m + i) * CLASS_OUTPUTS + c]).sum();
                    four.push(s / 4.0);
                }
            }
        } else {
            let logits = net.forward(&ImageBatch::new(images.shape, src.to_vec())?)?;
            one.extend(f64_softmax(&logits.class));
        }
    }
    Ok((one, four))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted classes (ties go to the lowest index).
pub fn predictions(probs: &[f64]) -> Vec<usize> {
    probs.chunks_exact(CLASS_OUTPUTS).map(argmax).collect()
}

/// Predicted class of one normalized image.
pub fn predict<F: Real>(
    net: &TwoHeadNetwork<F>,
    image: &[F],
    shape: InputShape,
    protocol: PredictionProtocol,
) -> Result<usize> {
    let batch = ImageBatch::new(shape, image.to_vec())?;
    let four = protocol == PredictionProtocol::FourRotation;
    let (one, avg) = class_probabilities(net, &batch, four, 1)?;
    Ok(argmax(avg.as_deref().unwrap_or(&one)))
}

fn percent_correct(pred: &[usize], labels: &[usize]) -> f64 {
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    100.0 * correct as f64 / labels.len() as f64
}

fn check_labels(images_count: usize, labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(NlabError::validation("accuracy of an empty dataset"));
    }
    if labels.len() != images_count {
        return Err(NlabError::Shape {
            expected: format!("{images_count} labels"),
            actual: format!("{}", labels.len()),
        });
    }
    Ok(())
}

/// Percent of `labels` predicted correctly under `protocol`.
pub fn accuracy<F: Real>(
    net: &TwoHeadNetwork<F>,
    images: &ImageBatch<F>,
    labels: &[usize],
    protocol: PredictionProtocol,
    chunk: usize,
) -> Result<f64> {
    check_labels(images.count, labels)?;
    let four = protocol == PredictionProtocol::FourRotation;
    let (one, avg) = class_probabilities(net, images, four, chunk)?;
    Ok(percent_correct(&predictions(avg.as_deref().unwrap_or(&one)), labels))
}

/// One-image accuracy, plus four-rotation accuracy when `with_rotations`.
pub fn accuracy_both<F: Real>(
    net: &TwoHeadNetwork<F>,
    images: &ImageBatch<F>,
    labels: &[usize],
    with_rotations: bool,
    chunk: usize,
) -> Result<(f64, Option<f64>)> {
    check_labels(images.count, labels)?;
    let (one, four) = class_probabilities(net, images, with_rotations, chunk)?;
    Ok((
        percent_correct(&predictions(&one), labels),
        four.map(|p| percent_correct(&predictions(&p), labels)),
    ))
}
