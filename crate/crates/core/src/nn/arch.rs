use crate::error::{NlabError, Result};

/// Width of the classification head.
pub const CLASS_OUTPUTS: usize = 10;
/// Width of the rotation head (0°, 90°, 180°, 270°).
pub const ROT_OUTPUTS: usize = 4;

/// Input tensor shape, stored channel-planar (C×H×W) like CIFAR-10 records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub const CIFAR: InputShape = InputShape {
        height: 32,
        width: 32,
        channels: 3,
    };

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A `same`-padded convolution followed by ReLU and 2×2 max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: InputShape,
    pub conv: Vec<ConvSpec>,
    /// Hidden fully-connected width; 0 feeds the flattened conv features
    /// straight into the heads.
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input: InputShape::CIFAR,
            conv: vec![
                ConvSpec {
                    out_channels: 8,
                    kernel: 3,
                },
                ConvSpec {
                    out_channels: 16,
                    kernel: 3,
                },
            ],
            hidden: 64,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let InputShape {
            height,
            width,
            channels,
        } = self.input;
        if height == 0 || width == 0 || channels == 0 {
            return Err(NlabError::validation("input dimensions must be positive"));
        }
        let div = 1usize << self.conv.len();
        if height % div != 0 || width % div != 0 {
            return Err(NlabError::validation(format!(
                "input {height}x{width} is not divisible by {div} ({} pooling stages)",
                self.conv.len()
            )));
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 {
                return Err(NlabError::validation(format!("conv{i} has zero channels")));
            }
            if c.kernel == 0 || c.kernel % 2 == 0 {
                return Err(NlabError::validation(format!(
                    "conv{i} kernel {} must be odd",
                    c.kernel
                )));
            }
        }
        Ok(())
    }

    /// Spatial size (height, width, channels) seen by conv layer `layer`.
    pub fn conv_input(&self, layer: usize) -> InputShape {
        let shrink = 1usize << layer;
        InputShape {
            height: self.input.height / shrink,
            width: self.input.width / shrink,
            channels: if layer == 0 {
                self.input.channels
            } else {
                self.conv[layer - 1].out_channels
            },
        }
    }

    /// Length of the flattened output of the last pooling stage.
    pub fn flat_features(&self) -> usize {
        self.conv_input(self.conv.len()).len()
    }

    /// Length of the trunk feature vector shared by both heads.
    pub fn feature_dim(&self) -> usize {
        if self.hidden > 0 {
            self.hidden
        } else {
            self.flat_features()
        }
    }

    /// `(name, shape)` of every parameter block in checkpoint order.
    pub fn block_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            let cin = self.conv_input(i).channels;
            out.push((format!("conv{i}.weight"), vec![c.out_channels, cin, c.kernel, c.kernel]));
            out.push((format!("conv{i}.bias"), vec![c.out_channels]));
        }
        if self.hidden > 0 {
            out.push(("fc.weight".into(), vec![self.hidden, self.flat_features()]));
            out.push(("fc.bias".into(), vec![self.hidden]));
        }
        let feat = self.feature_dim();
        out.push(("class_head.weight".into(), vec![CLASS_OUTPUTS, feat]));
        out.push(("class_head.bias".into(), vec![CLASS_OUTPUTS]));
        out.push(("rot_head.weight".into(), vec![ROT_OUTPUTS, feat]));
        out.push(("rot_head.bias".into(), vec![ROT_OUTPUTS]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.block_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Compact text form, e.g. `32x32x3:c8k3,c16k3:h64`.
    pub fn describe(&self) -> String {
        let conv: Vec<String> = self
            .conv
            .iter()
            .map(|c| format!("c{}k{}", c.out_channels, c.kernel))
            .collect();
        format!(
            "{}x{}x{}:{}:h{}",
            self.input.height,
            self.input.width,
            self.input.channels,
            conv.join(","),
            self.hidden
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || NlabError::Config(format!("malformed architecture `{text}`"));
        let mut parts = text.trim().split(':');
        let input = parts.next().ok_or_else(bad)?;
        let conv = parts.next().ok_or_else(bad)?;
        let hidden = parts.next().ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let dims: Vec<usize> = input
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [height, width, channels] = dims[..] else {
            return Err(bad());
        };
        let conv = if conv.is_empty() {
            Vec::new()
        } else {
            conv.split(',')
                .map(|c| {
                    let rest = c.strip_prefix('c').ok_or_else(bad)?;
                    let (ch, k) = rest.split_once('k').ok_or_else(bad)?;
                    Ok(ConvSpec {
                        out_channels: ch.parse().map_err(|_| bad())?,
                        kernel: k.parse().map_err(|_| bad())?,
                    })
                })
                .collect::<Result<_>>()?
        };
        let hidden = hidden.strip_prefix('h').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let arch = Architecture {
            input: InputShape {
                height,
                width,
                channels,
            },
            conv,
            hidden,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_parse_roundtrip() {
        let arch = Architecture::default();
        assert_eq!(Architecture::parse(&arch.describe()).unwrap(), arch);
        let flat = Architecture::parse("8x8x1::h0").unwrap();
        assert!(flat.conv.is_empty());
        assert_eq!(flat.feature_dim(), 64);
    }

    #[test]
    fn rejects_indivisible_input() {
        assert!(Architecture::parse("6x6x1:c2k3,c2k3:h4").is_err());
        assert!(Architecture::parse("8x8x1:c2k2:h4").is_err());
    }

    #[test]
    fn block_order_ends_with_heads() {
        let shapes = Architecture::default().block_shapes();
        let names: Vec<&str> = shapes.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            &names[names.len() - 4..],
            [
                "class_head.weight",
                "class_head.bias",
                "rot_head.weight",
                "rot_head.bias"
            ]
        );
        assert_eq!(shapes[0].1, vec![8, 3, 3, 3]);
    }
}
