//! Versioned binary parameter checkpoints.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "NLAB"                       magic, 4 bytes
//! version                      currently 1
//! height width channels        input shape
//! n_conv                       then n_conv × (out_channels, kernel)
//! hidden                       0 when there is no hidden layer
//! class_outputs rot_outputs    always 10 and 4
//! n_blocks                     then per block: count, count × f32 LE
//! ```
//!
//! Blocks appear in [`Architecture::block_shapes`] order.

use std::io::{Read, Write};
use std::path::Path;

use super::arch::{Architecture, ConvSpec, InputShape, CLASS_OUTPUTS, ROT_OUTPUTS};
use super::network::{ParamBlock, TwoHeadNetwork};
use super::Real;
use crate::error::{NlabError, Result};

pub const MAGIC: &[u8; 4] = b"NLAB";
pub const VERSION: u32 = 1;

pub fn encode<F: Real>(net: &TwoHeadNetwork<F>) -> Vec<u8> {
    let arch = net.architecture();
    let mut out = Vec::with_capacity(64 + 4 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(VERSION as usize);
    put(arch.input.height);
    put(arch.input.width);
    put(arch.input.channels);
    put(arch.conv.len());
    for c in &arch.conv {
        put(c.out_channels);
        put(c.kernel);
    }
    put(arch.hidden);
    put(CLASS_OUTPUTS);
    put(ROT_OUTPUTS);
    put(net.blocks().len());
    for b in net.blocks() {
        out.extend_from_slice(&(b.values.len() as u32).to_le_bytes());
        for v in &b.values {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NlabError::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode<F: Real>(bytes: &[u8]) -> Result<TwoHeadNetwork<F>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NlabError::Checkpoint("bad magic, expected NLAB".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(NlabError::Checkpoint(format!("unsupported version {version}")));
    }
    let input = InputShape {
        height: r.u32()?,
        width: r.u32()?,
        channels: r.u32()?,
    };
    let n_conv = r.u32()?;
    if n_conv > 16 {
        return Err(NlabError::Checkpoint(format!("implausible conv depth {n_conv}")));
    }
    let mut conv = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        conv.push(ConvSpec {
            out_channels: r.u32()?,
            kernel: r.u32()?,
        });
    }
    let hidden = r.u32()?;
    let (classes, rots) = (r.u32()?, r.u32()?);
    if classes != CLASS_OUTPUTS || rots != ROT_OUTPUTS {
        return Err(NlabError::Checkpoint(format!(
            "head widths {classes}/{rots}, expected {CLASS_OUTPUTS}/{ROT_OUTPUTS}"
        )));
    }
    let arch = Architecture { input, conv, hidden };
    arch.validate()
        .map_err(|e| NlabError::Checkpoint(format!("invalid architecture: {e}")))?;
    let shapes = arch.block_shapes();
    let n_blocks = r.u32()?;
    if n_blocks != shapes.len() {
        return Err(NlabError::Checkpoint(format!(
            "{n_blocks} blocks, architecture declares {}",
            shapes.len()
        )));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for (name, shape) in shapes {
        let count = r.u32()?;
        let expected: usize = shape.iter().product();
        if count != expected {
            return Err(NlabError::Checkpoint(format!(
                "block {name} has {count} values, expected {expected}"
            )));
        }
        let raw = r.take(4 * count)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| F::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        blocks.push(ParamBlock { name, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(NlabError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    TwoHeadNetwork::from_blocks(arch, blocks)
}

pub fn save<F: Real>(net: &TwoHeadNetwork<F>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| NlabError::io(format!("creating {}", path.display()), e))?;
    f.write_all(&encode(net))
        .map_err(|e| NlabError::io(format!("writing {}", path.display()), e))
}

pub fn load<F: Real>(path: &Path) -> Result<TwoHeadNetwork<F>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| NlabError::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let net = TwoHeadNetwork::<f32>::new(Architecture::parse("4x4x1:c2k3:h3").unwrap(), 1).unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"NLAB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        let first = net.blocks()[0].values[0];
        // magic + version + 3 dims + n_conv + 2 conv + hidden + 2 heads + n_blocks + count
        let off = 4 + 4 * 12;
        assert_eq!(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()), first);
        assert_eq!(decode::<f32>(&bytes).unwrap(), net);
    }

    #[test]
    fn rejects_corruption() {
        let net = TwoHeadNetwork::<f32>::new(Architecture::parse("4x4x1::h0").unwrap(), 1).unwrap();
        let mut bytes = encode(&net);
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(decode::<f32>(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode::<f32>(&bytes).is_err());
    }
}
