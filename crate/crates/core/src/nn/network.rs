use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, InputShape, CLASS_OUTPUTS, ROT_OUTPUTS};
use super::Real;
use crate::error::{NlabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

/// Normalized images laid out as `count` consecutive C×H×W planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch<F> {
    pub shape: InputShape,
    pub count: usize,
    pub data: Vec<F>,
}

impl<F: Real> ImageBatch<F> {
    pub fn new(shape: InputShape, data: Vec<F>) -> Result<Self> {
        let per = shape.len();
        if per == 0 || !data.len().is_multiple_of(per) {
            return Err(NlabError::Shape {
                expected: format!("a multiple of {per} values"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(ImageBatch {
            shape,
            count: data.len() / per,
            data,
        })
    }

    pub fn image(&self, i: usize) -> &[F] {
        let per = self.shape.len();
        &self.data[i * per..(i + 1) * per]
    }
}

/// Row-major `batch × 10` class logits and `batch × 4` rotation logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<F> {
    pub batch: usize,
    pub class: Vec<F>,
    pub rot: Vec<F>,
}

impl<F> Logits<F> {
    pub fn class_row(&self, i: usize) -> &[F] {
        &self.class[i * CLASS_OUTPUTS..(i + 1) * CLASS_OUTPUTS]
    }

    pub fn rot_row(&self, i: usize) -> &[F] {
        &self.rot[i * ROT_OUTPUTS..(i + 1) * ROT_OUTPUTS]
    }
}

/// Activations kept from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    batch: usize,
    input: Vec<F>,
    // per conv layer, per sample concatenated
    conv_out: Vec<Vec<F>>,
    pool_idx: Vec<Vec<u32>>,
    pooled: Vec<Vec<F>>,
    hidden: Vec<F>,
}

impl<F> ForwardCache<F> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// One gradient buffer per parameter block, same order as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub blocks: Vec<Vec<F>>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    conv_layers: usize,
    fc: Option<usize>,
    class: usize,
    rot: usize,
}

impl Layout {
    fn of(arch: &Architecture) -> Self {
        let conv_layers = arch.conv.len();
        let mut next = 2 * conv_layers;
        let fc = if arch.hidden > 0 {
            next += 2;
            Some(next - 2)
        } else {
            None
        };
        Layout {
            conv_layers,
            fc,
            class: next,
            rot: next + 2,
        }
    }
}

/// Small CNN trunk (conv → ReLU → max-pool stages, optional hidden layer)
/// feeding two parallel linear heads: 10 class logits and 4 rotation logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoHeadNetwork<F> {
    arch: Architecture,
    blocks: Vec<ParamBlock<F>>,
}

impl<F: Real> TwoHeadNetwork<F> {
    /// Uniform init in ±1/√fan_in for weights and biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.block_shapes();
        let mut blocks = Vec::with_capacity(shapes.len());
        // weight/bias pairs share the weight's fan-in
        let mut fan_in = 1usize;
        for (name, shape) in shapes {
            if name.ends_with(".weight") {
                fan_in = shape[1..].iter().product();
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let values = (0..n)
                .map(|_| F::from_f64_lossy(rng.random_range(-bound..bound)))
                .collect();
            blocks.push(ParamBlock { name, shape, values });
        }
        Ok(TwoHeadNetwork { arch, blocks })
    }

    /// Rebuilds a network from explicit blocks, checking them against `arch`.
    pub fn from_blocks(arch: Architecture, blocks: Vec<ParamBlock<F>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.block_shapes();
        if shapes.len() != blocks.len() {
            return Err(NlabError::Shape {
                expected: format!("{} parameter blocks", shapes.len()),
                actual: format!("{}", blocks.len()),
            });
        }
        for ((name, shape), b) in shapes.iter().zip(&blocks) {
            let n: usize = shape.iter().product();
            if &b.name != name || &b.shape != shape || b.values.len() != n {
                return Err(NlabError::Shape {
                    expected: format!("{name} {shape:?}"),
                    actual: format!("{} {:?} ({} values)", b.name, b.shape, b.values.len()),
                });
            }
        }
        Ok(TwoHeadNetwork { arch, blocks })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn blocks(&self) -> &[ParamBlock<F>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock<F>] {
        &mut self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock<F>> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut ParamBlock<F>> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.values.iter().all(|v| v.is_finite()))
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        Gradients {
            blocks: self.blocks.iter().map(|b| vec![F::zero(); b.values.len()]).collect(),
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<G: Real>(&self) -> TwoHeadNetwork<G> {
        TwoHeadNetwork {
            arch: self.arch.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    values: b.values.iter().map(|v| G::from_f64_lossy(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    fn check_batch(&self, batch: &ImageBatch<F>) -> Result<()> {
        if batch.shape != self.arch.input || batch.data.len() != batch.count * batch.shape.len() {
            return Err(NlabError::Shape {
                expected: format!(
                    "{}x{}x{} images",
                    self.arch.input.height, self.arch.input.width, self.arch.input.channels
                ),
                actual: format!(
                    "{}x{}x{} images ({} values for {} samples)",
                    batch.shape.height,
                    batch.shape.width,
                    batch.shape.channels,
                    batch.data.len(),
                    batch.count
                ),
            });
        }
        Ok(())
    }

    /// Inference pass; keeps no activations.
    pub fn forward(&self, batch: &ImageBatch<F>) -> Result<Logits<F>> {
        self.check_batch(batch)?;
        Ok(self.run_forward(batch, false).0)
    }

    /// Forward pass that also returns the activations `backward` needs.
    pub fn forward_train(&self, batch: &ImageBatch<F>) -> Result<(Logits<F>, ForwardCache<F>)> {
        self.check_batch(batch)?;
        let (logits, cache) = self.run_forward(batch, true);
        Ok((logits, cache.expect("cache requested")))
    }

    fn run_forward(&self, batch: &ImageBatch<F>, keep: bool) -> (Logits<F>, Option<ForwardCache<F>>) {
        let layout = Layout::of(&self.arch);
        let n = batch.count;
        let mut logits = Logits {
            batch: n,
            class: vec![F::zero(); n * CLASS_OUTPUTS],
            rot: vec![F::zero(); n * ROT_OUTPUTS],
        };

        let conv_len: Vec<usize> = (0..layout.conv_layers)
            .map(|l| {
                let s = self.arch.conv_input(l);
                s.height * s.width * self.arch.conv[l].out_channels
            })
            .collect();
        let pool_len: Vec<usize> = conv_len.iter().map(|c| c / 4).collect();

        let mut cache = keep.then(|| ForwardCache {
            batch: n,
            input: batch.data.clone(),
            conv_out: conv_len.iter().map(|&c| Vec::with_capacity(c * n)).collect(),
            pool_idx: pool_len.iter().map(|&p| Vec::with_capacity(p * n)).collect(),
            pooled: pool_len.iter().map(|&p| Vec::with_capacity(p * n)).collect(),
            hidden: Vec::with_capacity(self.arch.hidden * n),
        });

        let mut conv_buf: Vec<Vec<F>> = conv_len.iter().map(|&c| vec![F::zero(); c]).collect();
        let mut pool_buf: Vec<Vec<F>> = pool_len.iter().map(|&p| vec![F::zero(); p]).collect();
        let mut idx_buf: Vec<Vec<u32>> = pool_len.iter().map(|&p| vec![0; p]).collect();
        let mut hidden = vec![F::zero(); self.arch.hidden];
        let mut col = Vec::new();

        for s in 0..n {
            let image = batch.image(s);
            for l in 0..layout.conv_layers {
                let shape = self.arch.conv_input(l);
                let spec = self.arch.conv[l];
                let input: &[F] = if l == 0 { image } else { &pool_buf[l - 1] };
                let out = &mut conv_buf[l];
                conv_forward(
                    input,
                    shape,
                    &self.blocks[2 * l].values,
                    &self.blocks[2 * l + 1].values,
                    spec.out_channels,
                    spec.kernel,
                    &mut col,
                    out,
                );
                for v in out.iter_mut() {
                    if *v < F::zero() {
                        *v = F::zero();
                    }
                }
                // conv_buf[l] and pool_buf[l] are disjoint vectors
                let (conv_l, pool_l) = (&conv_buf[l], &mut pool_buf[l]);
                max_pool(
                    conv_l,
                    shape.height,
                    shape.width,
                    spec.out_channels,
                    pool_l,
                    &mut idx_buf[l],
                );
                if let Some(c) = cache.as_mut() {
                    c.conv_out[l].extend_from_slice(&conv_buf[l]);
                    c.pool_idx[l].extend_from_slice(&idx_buf[l]);
                    c.pooled[l].extend_from_slice(&pool_buf[l]);
                }
            }
            let flat: &[F] = if layout.conv_layers == 0 {
                image
            } else {
                &pool_buf[layout.conv_layers - 1]
            };
            let features: &[F] = if let Some(fc) = layout.fc {
                dense_forward(&self.blocks[fc].values, &self.blocks[fc + 1].values, flat, &mut hidden);
                for v in hidden.iter_mut() {
                    if *v < F::zero() {
                        *v = F::zero();
                    }
                }
                if let Some(c) = cache.as_mut() {
                    c.hidden.extend_from_slice(&hidden);
                }
                &hidden
            } else {
                flat
            };
            dense_forward(
                &self.blocks[layout.class].values,
                &self.blocks[layout.class + 1].values,
                features,
                &mut logits.class[s * CLASS_OUTPUTS..(s + 1) * CLASS_OUTPUTS],
            );
            dense_forward(
                &self.blocks[layout.rot].values,
                &self.blocks[layout.rot + 1].values,
                features,
                &mut logits.rot[s * ROT_OUTPUTS..(s + 1) * ROT_OUTPUTS],
            );
        }
        (logits, cache)
    }

    /// Backpropagates logit gradients (`batch × 10`, `batch × 4`) through the
    /// network and returns parameter gradients.
    pub fn backward(&self, cache: &ForwardCache<F>, d_class: &[F], d_rot: &[F]) -> Result<Gradients<F>> {
        let n = cache.batch;
        if d_class.len() != n * CLASS_OUTPUTS || d_rot.len() != n * ROT_OUTPUTS {
            return Err(NlabError::Shape {
                expected: format!("{}x{CLASS_OUTPUTS} and {}x{ROT_OUTPUTS} logit gradients", n, n),
                actual: format!("{} and {} values", d_class.len(), d_rot.len()),
            });
        }
        let layout = Layout::of(&self.arch);
        let mut grads = self.zero_gradients();
        let per_input = self.arch.input.len();
        let feat_dim = self.arch.feature_dim();
        let flat_dim = self.arch.flat_features();

        let mut d_feat = vec![F::zero(); feat_dim];
        let mut d_flat = vec![F::zero(); flat_dim];
        let (mut col, mut d_col) = (Vec::new(), Vec::new());

        for s in 0..n {
            let input = &cache.input[s * per_input..(s + 1) * per_input];
            let flat: &[F] = if layout.conv_layers == 0 {
                input
            } else {
                let l = layout.conv_layers - 1;
                let p = cache.pooled[l].len() / n;
                &cache.pooled[l][s * p..(s + 1) * p]
            };
            let features: &[F] = if layout.fc.is_some() {
                &cache.hidden[s * feat_dim..(s + 1) * feat_dim]
            } else {
                flat
            };

            d_feat.fill(F::zero());
            let dc = &d_class[s * CLASS_OUTPUTS..(s + 1) * CLASS_OUTPUTS];
            let dr = &d_rot[s * ROT_OUTPUTS..(s + 1) * ROT_OUTPUTS];
            {
                let (head_w, rest) = grads.blocks[layout.class..].split_at_mut(1);
                dense_backward(
                    &self.blocks[layout.class].values,
                    features,
                    dc,
                    &mut head_w[0],
                    &mut rest[0],
                    Some(&mut d_feat),
                );
            }
            {
                let (head_w, rest) = grads.blocks[layout.rot..].split_at_mut(1);
                dense_backward(
                    &self.blocks[layout.rot].values,
                    features,
                    dr,
                    &mut head_w[0],
                    &mut rest[0],
                    Some(&mut d_feat),
                );
            }

            if let Some(fc) = layout.fc {
                for (d, h) in d_feat.iter_mut().zip(features) {
                    if *h <= F::zero() {
                        *d = F::zero();
                    }
                }
                d_flat.fill(F::zero());
                let (w, rest) = grads.blocks[fc..].split_at_mut(1);
                dense_backward(
                    &self.blocks[fc].values,
                    flat,
                    &d_feat,
                    &mut w[0],
                    &mut rest[0],
                    (layout.conv_layers > 0).then_some(&mut d_flat[..]),
                );
            } else {
                d_flat.copy_from_slice(&d_feat);
            }

            // conv stages in reverse; `d_next` is the gradient w.r.t. the pooled output
            let mut d_next = d_flat.clone();
            for l in (0..layout.conv_layers).rev() {
                let shape = self.arch.conv_input(l);
                let spec = self.arch.conv[l];
                let conv_per = cache.conv_out[l].len() / n;
                let pool_per = cache.pooled[l].len() / n;
                let conv_out = &cache.conv_out[l][s * conv_per..(s + 1) * conv_per];
                let idx = &cache.pool_idx[l][s * pool_per..(s + 1) * pool_per];
                let mut d_conv = vec![F::zero(); conv_per];
                for (j, &i) in idx.iter().enumerate() {
                    d_conv[i as usize] += d_next[j];
                }
                for (d, o) in d_conv.iter_mut().zip(conv_out) {
                    if *o <= F::zero() {
                        *d = F::zero();
                    }
                }
                let layer_input: &[F] = if l == 0 {
                    input
                } else {
                    let p = cache.pooled[l - 1].len() / n;
                    &cache.pooled[l - 1][s * p..(s + 1) * p]
                };
                let mut d_input = if l > 0 {
                    Some(vec![F::zero(); layer_input.len()])
                } else {
                    None
                };
                let (w, rest) = grads.blocks[2 * l..].split_at_mut(1);
                conv_backward(
                    layer_input,
                    shape,
                    &self.blocks[2 * l].values,
                    spec.out_channels,
                    spec.kernel,
                    &d_conv,
                    &mut w[0],
                    &mut rest[0],
                    d_input.as_deref_mut(),
                    &mut col,
                    &mut d_col,
                );
                if let Some(d) = d_input {
                    d_next = d;
                }
            }
        }
        Ok(grads)
    }
}

/// Dot product with eight independent accumulators so the reduction
/// vectorizes.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * *xv;
    }
}

fn dense_forward<F: Real>(weight: &[F], bias: &[F], x: &[F], out: &mut [F]) {
    let n_in = x.len();
    for (o, (out_v, b)) in out.iter_mut().zip(bias).enumerate() {
        *out_v = *b + dot(&weight[o * n_in..(o + 1) * n_in], x);
    }
}

fn dense_backward<F: Real>(
    weight: &[F],
    x: &[F],
    d_out: &[F],
    d_weight: &mut [F],
    d_bias: &mut [F],
    d_x: Option<&mut [F]>,
) {
    let n_in = x.len();
    for (o, &g) in d_out.iter().enumerate() {
        d_bias[o] += g;
        if g == F::zero() {
            continue;
        }
        axpy(&mut d_weight[o * n_in..(o + 1) * n_in], g, x);
    }
    if let Some(d_x) = d_x {
        for (o, &g) in d_out.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            axpy(d_x, g, &weight[o * n_in..(o + 1) * n_in]);
        }
    }
}

/// Valid ranges of output rows/cols for a kernel offset under `same` padding.
#[inline]
fn tap_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// Unfolds a C×H×W image into a `(C·k·k) × (H·W)` patch matrix (zero padded).
fn im2col<F: Real>(input: &[F], shape: InputShape, k: usize, col: &mut [F]) {
    let (h, w, cin) = (shape.height, shape.width, shape.channels);
    let plane = h * w;
    let pad = (k / 2) as isize;
    col.fill(F::zero());
    for c in 0..cin {
        let in_plane = &input[c * plane..(c + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = tap_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = tap_range(w, dx);
                let r = (c * k + ky) * k + kx;
                let row = &mut col[r * plane..(r + 1) * plane];
                let ix0 = (x0 as isize + dx) as usize;
                for y in y0..y1 {
                    let iy = (y as isize + dy) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&in_plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch-matrix gradients into the image.
fn col2im<F: Real>(col: &[F], shape: InputShape, k: usize, d_input: &mut [F]) {
    let (h, w, cin) = (shape.height, shape.width, shape.channels);
    let plane = h * w;
    let pad = (k / 2) as isize;
    for c in 0..cin {
        let d_plane = &mut d_input[c * plane..(c + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            let (y0, y1) = tap_range(h, dy);
            for kx in 0..k {
                let dx = kx as isize - pad;
                let (x0, x1) = tap_range(w, dx);
                let r = (c * k + ky) * k + kx;
                let row = &col[r * plane..(r + 1) * plane];
                let ix0 = (x0 as isize + dx) as usize;
                for y in y0..y1 {
                    let iy = (y as isize + dy) as usize;
                    let dst = &mut d_plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                    for (d, v) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += *v;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<F: Real>(
    input: &[F],
    shape: InputShape,
    weight: &[F],
    bias: &[F],
    out_channels: usize,
    k: usize,
    col: &mut Vec<F>,
    out: &mut [F],
) {
    let plane = shape.height * shape.width;
    let taps = shape.channels * k * k;
    col.resize(taps * plane, F::zero());
    im2col(input, shape, k, col);
    for o in 0..out_channels {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.fill(bias[o]);
        let w_row = &weight[o * taps..(o + 1) * taps];
        for (r, &wv) in w_row.iter().enumerate() {
            axpy(out_plane, wv, &col[r * plane..(r + 1) * plane]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Real>(
    input: &[F],
    shape: InputShape,
    weight: &[F],
    out_channels: usize,
    k: usize,
    d_out: &[F],
    d_weight: &mut [F],
    d_bias: &mut [F],
    d_input: Option<&mut [F]>,
    col: &mut Vec<F>,
    d_col: &mut Vec<F>,
) {
    let plane = shape.height * shape.width;
    let taps = shape.channels * k * k;
    col.resize(taps * plane, F::zero());
    im2col(input, shape, k, col);
    let want_input = d_input.is_some();
    if want_input {
        d_col.clear();
        d_col.resize(taps * plane, F::zero());
    }
    for o in 0..out_channels {
        let d_plane = &d_out[o * plane..(o + 1) * plane];
        let mut db = F::zero();
        for v in d_plane {
            db += *v;
        }
        d_bias[o] += db;
        let dw_row = &mut d_weight[o * taps..(o + 1) * taps];
        for (r, dw) in dw_row.iter_mut().enumerate() {
            *dw += dot(d_plane, &col[r * plane..(r + 1) * plane]);
        }
        if want_input {
            let w_row = &weight[o * taps..(o + 1) * taps];
            for (r, &wv) in w_row.iter().enumerate() {
                axpy(&mut d_col[r * plane..(r + 1) * plane], wv, d_plane);
            }
        }
    }
    if let Some(d_input) = d_input {
        col2im(d_col, shape, k, d_input);
    }
}

fn max_pool<F: Real>(input: &[F], h: usize, w: usize, channels: usize, out: &mut [F], idx: &mut [u32]) {
    let (oh, ow) = (h / 2, w / 2);
    for c in 0..channels {
        let base = c * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_i = base + 2 * oy * w + 2 * ox;
                let mut best = input[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if input[i] > best {
                        best = input[i];
                        best_i = i;
                    }
                }
                let o = c * oh * ow + oy * ow + ox;
                out[o] = best;
                idx[o] = best_i as u32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{softmax_rows, ConvSpec};

    fn tiny_arch() -> Architecture {
        Architecture {
            input: InputShape {
                height: 4,
                width: 4,
                channels: 2,
            },
            conv: vec![ConvSpec {
                out_channels: 3,
                kernel: 3,
            }],
            hidden: 5,
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = TwoHeadNetwork::<f64>::new(Architecture::default(), 7).unwrap();
        let w = net.block("conv0.weight").unwrap();
        let bound = 1.0 / 27f64.sqrt();
        assert!(w.values.iter().all(|v| v.abs() <= bound));
        let b = net.block("class_head.bias").unwrap();
        assert!(b.values.iter().all(|v| v.abs() <= 1.0 / 8.0));
    }

    #[test]
    fn zero_heads_give_uniform_softmax() {
        let mut net = TwoHeadNetwork::<f64>::new(tiny_arch(), 3).unwrap();
        for name in ["class_head.weight", "class_head.bias"] {
            net.block_mut(name).unwrap().values.fill(0.0);
        }
        let data: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = ImageBatch::new(tiny_arch().input, data).unwrap();
        let logits = net.forward(&batch).unwrap();
        let probs = softmax_rows(&logits.class, CLASS_OUTPUTS);
        for p in probs {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_rows_give_identical_logits() {
        let net = TwoHeadNetwork::<f32>::new(tiny_arch(), 11).unwrap();
        let one: Vec<f32> = (0..32).map(|i| (i as f32 * 0.21).cos()).collect();
        let mut data = one.clone();
        data.extend_from_slice(&one);
        let batch = ImageBatch::new(tiny_arch().input, data).unwrap();
        let logits = net.forward(&batch).unwrap();
        assert_eq!(logits.class_row(0), logits.class_row(1));
        assert_eq!(logits.rot_row(0), logits.rot_row(1));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = TwoHeadNetwork::<f32>::new(tiny_arch(), 1).unwrap();
        let batch = ImageBatch::new(InputShape::CIFAR, vec![0.0; 3072]).unwrap();
        assert!(matches!(net.forward(&batch), Err(NlabError::Shape { .. })));
    }

    #[test]
    fn training_forward_matches_inference() {
        let net = TwoHeadNetwork::<f64>::new(tiny_arch(), 5).unwrap();
        let data: Vec<f64> = (0..96).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect();
        let batch = ImageBatch::new(tiny_arch().input, data).unwrap();
        let (a, cache) = net.forward_train(&batch).unwrap();
        assert_eq!(cache.batch(), 3);
        assert_eq!(a, net.forward(&batch).unwrap());
    }

    #[test]
    fn max_pool_takes_first_maximum() {
        let input = [1.0f64, 3.0, 3.0, 0.0];
        let mut out = [0.0];
        let mut idx = [0];
        max_pool(&input, 2, 2, 1, &mut out, &mut idx);
        assert_eq!(out[0], 3.0);
        assert_eq!(idx[0], 1);
    }

    #[test]
    fn conv_identity_kernel_copies_input() {
        let shape = InputShape {
            height: 3,
            width: 3,
            channels: 1,
        };
        let input: Vec<f64> = (0..9).map(f64::from).collect();
        let mut weight = vec![0.0; 9];
        weight[4] = 1.0;
        let mut out = vec![0.0; 9];
        conv_forward(&input, shape, &weight, &[0.5], 1, 3, &mut Vec::new(), &mut out);
        let expect: Vec<f64> = input.iter().map(|v| v + 0.5).collect();
        assert_eq!(out, expect);
    }
}
