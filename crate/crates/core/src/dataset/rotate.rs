use rand::Rng;

use super::SampleRecord;
use crate::error::{NlabError, Result};
use crate::nn::InputShape;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotatedSample {
    pub image: Vec<u8>,
    /// Quarter turns counter-clockwise: 0, 90°, 180°, 270°.
    pub rotation_label: u8,
    pub source_id: u32,
}

fn check_square(shape: InputShape) -> Result<()> {
    if shape.height != shape.width {
        return Err(NlabError::validation(format!(
            "quarter-turn rotation needs square images, got {}x{}",
            shape.height, shape.width
        )));
    }
    Ok(())
}

/// Rotates every C×N×N plane of `src` by `quarter_turns`·90°
/// counter-clockwise into `dst`.
///
/// Output pixel `(y, x)` reads input `(x, N−1−y)` for one turn, so the
/// top-left pixel visits the bottom-left, bottom-right and top-right
/// corners for labels 1, 2, 3.
pub fn rotate_image<T: Copy>(src: &[T], shape: InputShape, quarter_turns: u8, dst: &mut [T]) {
    let n = shape.width;
    let plane = n * n;
    debug_assert_eq!(shape.height, n);
    debug_assert_eq!(src.len(), plane * shape.channels);
    let last = n - 1;
    for c in 0..shape.channels {
        let s = &src[c * plane..(c + 1) * plane];
        let d = &mut dst[c * plane..(c + 1) * plane];
        match quarter_turns % 4 {
            0 => d.copy_from_slice(s),
            1 => {
                for y in 0..n {
                    for x in 0..n {
                        d[y * n + x] = s[x * n + (last - y)];
                    }
                }
            }
            2 => {
                for y in 0..n {
                    for x in 0..n {
                        d[y * n + x] = s[(last - y) * n + (last - x)];
                    }
                }
            }
            _ => {
                for y in 0..n {
                    for x in 0..n {
                        d[y * n + x] = s[(last - x) * n + y];
                    }
                }
            }
        }
    }
}

/// Assigns each record an independent uniform rotation drawn from `rng`.
pub fn rotate_batch<R: Rng>(batch: &[SampleRecord], shape: InputShape, rng: &mut R) -> Result<Vec<RotatedSample>> {
    check_square(shape)?;
    batch
        .iter()
        .map(|r| {
            if r.image.len() != shape.len() {
                return Err(NlabError::Shape {
                    expected: format!("{} pixel bytes", shape.len()),
                    actual: format!("{}", r.image.len()),
                });
            }
            let label = rng.random_range(0..4u8);
            let mut image = vec![0u8; r.image.len()];
            rotate_image(&r.image, shape, label, &mut image);
            Ok(RotatedSample {
                image,
                rotation_label: label,
                source_id: r.id,
            })
        })
        .collect()
}

/// The four rotations of `image`, labels 0..3 in order.
pub fn rotate_all_four(image: &[u8], shape: InputShape, source_id: u32) -> Result<[RotatedSample; 4]> {
    check_square(shape)?;
    if image.len() != shape.len() {
        return Err(NlabError::Shape {
            expected: format!("{} pixel bytes", shape.len()),
            actual: format!("{}", image.len()),
        });
    }
    Ok(std::array::from_fn(|k| {
        let mut out = vec![0u8; image.len()];
        rotate_image(image, shape, k as u8, &mut out);
        RotatedSample {
            image: out,
            rotation_label: k as u8,
            source_id,
        }
    }))
}
