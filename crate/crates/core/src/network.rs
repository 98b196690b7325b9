//! Network description: an ordered list of conv / pool / fully-connected
//! layers with all spatial sizes derived from the input by propagation.
//!
//! Config format (see `fixtures/nets/` for examples):
//!
//! ```text
//! name = vgg5
//! input = 3 32              # channels, square spatial size
//! layer = conv 64 3 1 1     # out-channels kernel stride pad
//! layer = pool 2 2          # window stride
//! layer = fc 10             # out-features
//! ```

use crate::config::KvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        in_size: usize,
        out_channels: usize,
        out_size: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Pool {
        channels: usize,
        in_size: usize,
        out_size: usize,
        window: usize,
        stride: usize,
    },
    Fc {
        in_features: usize,
        out_features: usize,
    },
}

/// Dimensions of one conv/FC layer in the notation used by the analytic
/// count formulas. FC layers map to `R = 1, H = E = 1` with `C` equal to the
/// flattened input feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDims {
    pub name: String,
    /// Input channels (or FC input features).
    pub c: usize,
    /// Input spatial size (square).
    pub h: usize,
    /// Output channels (or FC output features).
    pub k: usize,
    /// Output spatial size (square).
    pub e: usize,
    /// Kernel size (square).
    pub r: usize,
}

impl LayerDims {
    pub fn filter_words(&self) -> usize {
        self.k * self.c * self.r * self.r
    }

    pub fn input_elems(&self) -> usize {
        self.c * self.h * self.h
    }

    pub fn output_elems(&self) -> usize {
        self.k * self.e * self.e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let name = cfg.get("name").unwrap_or("unnamed").to_string();
        let input = cfg.require("input")?;
        let parts: Vec<&str> = input.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "input must be `channels size`, got `{input}`"
            )));
        }
        let input_channels: usize = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad input channels `{}`", parts[0])))?;
        let input_size: usize = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad input size `{}`", parts[1])))?;

        let mut layers = Vec::new();
        let mut channels = input_channels;
        let mut size = input_size;
        let mut flattened = false;
        for line in cfg.all("layer") {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad layer field `{s}` in `{line}`")))
            };
            match fields.first().copied() {
                Some("conv") => {
                    if flattened {
                        return Err(Error::Config("conv layer after fc layer".into()));
                    }
                    if fields.len() != 5 {
                        return Err(Error::Config(format!(
                            "conv needs `conv K R stride pad`, got `{line}`"
                        )));
                    }
                    let (k, r, stride, pad) = (
                        parse(fields[1])?,
                        parse(fields[2])?,
                        parse(fields[3])?,
                        parse(fields[4])?,
                    );
                    if k == 0 || r == 0 || stride == 0 {
                        return Err(Error::Config(format!("zero dimension in `{line}`")));
                    }
                    let padded = size + 2 * pad;
                    if padded < r || (padded - r) % stride != 0 {
                        return Err(Error::Config(format!(
                            "conv `{line}` does not tile input size {size} (pad {pad}, stride {stride})"
                        )));
                    }
                    let out_size = (padded - r) / stride + 1;
                    layers.push(LayerSpec::Conv {
                        in_channels: channels,
                        in_size: size,
                        out_channels: k,
                        out_size,
                        kernel: r,
                        stride,
                        pad,
                    });
                    channels = k;
                    size = out_size;
                }
                Some("pool") => {
                    if flattened {
                        return Err(Error::Config("pool layer after fc layer".into()));
                    }
                    if fields.len() != 3 {
                        return Err(Error::Config(format!(
                            "pool needs `pool window stride`, got `{line}`"
                        )));
                    }
                    let (window, stride) = (parse(fields[1])?, parse(fields[2])?);
                    if window == 0 || stride == 0 || size < window || (size - window) % stride != 0 {
                        return Err(Error::Config(format!(
                            "pool `{line}` does not tile input size {size}"
                        )));
                    }
                    let out_size = (size - window) / stride + 1;
                    layers.push(LayerSpec::Pool {
                        channels,
                        in_size: size,
                        out_size,
                        window,
                        stride,
                    });
                    size = out_size;
                }
                Some("fc") => {
                    if fields.len() != 2 {
                        return Err(Error::Config(format!("fc needs `fc OUT`, got `{line}`")));
                    }
                    let out = parse(fields[1])?;
                    if out == 0 {
                        return Err(Error::Config(format!("zero dimension in `{line}`")));
                    }
                    let in_features = if flattened { channels } else { channels * size * size };
                    layers.push(LayerSpec::Fc {
                        in_features,
                        out_features: out,
                    });
                    channels = out;
                    flattened = true;
                }
                _ => {
                    return Err(Error::Config(format!(
                        "unknown layer kind in `{line}` (expected conv/pool/fc)"
                    )))
                }
            }
        }
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if !matches!(layers.last(), Some(LayerSpec::Fc { .. })) {
            return Err(Error::Config("last layer must be fc (output accumulator)".into()));
        }
        Ok(NetworkSpec {
            name,
            input_channels,
            input_size,
            layers,
        })
    }

    /// Dimensions of the conv/FC layers only (pool layers carry no counts),
    /// named `cov1, cov2, ..` / `linN, ..` by position.
    pub fn conv_fc_dims(&self) -> Vec<LayerDims> {
        let mut dims = Vec::new();
        let mut idx = 0usize;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv {
                    in_channels,
                    in_size,
                    out_channels,
                    out_size,
                    kernel,
                    ..
                } => {
                    idx += 1;
                    dims.push(LayerDims {
                        name: format!("cov{idx}"),
                        c: *in_channels,
                        h: *in_size,
                        k: *out_channels,
                        e: *out_size,
                        r: *kernel,
                    });
                }
                LayerSpec::Fc {
                    in_features,
                    out_features,
                } => {
                    idx += 1;
                    dims.push(LayerDims {
                        name: format!("lin{idx}"),
                        c: *in_features,
                        h: 1,
                        k: *out_features,
                        e: 1,
                        r: 1,
                    });
                }
                LayerSpec::Pool { .. } => {}
            }
        }
        dims
    }

    /// Index of the output layer (the final FC accumulator).
    pub fn output_layer(&self) -> usize {
        self.layers.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vgg5() -> NetworkSpec {
        let cfg = KvConfig::parse(
            "name = vgg5\ninput = 3 32\nlayer = conv 64 3 1 1\nlayer = pool 2 2\n\
             layer = conv 128 3 1 1\nlayer = conv 128 3 1 1\nlayer = pool 2 2\n\
             layer = fc 1024\nlayer = fc 10\n",
        )
        .unwrap();
        NetworkSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn vgg5_dims_match_expected() {
        let dims = vgg5().conv_fc_dims();
        assert_eq!(dims.len(), 5);
        let d = &dims[0];
        assert_eq!((d.c, d.h, d.k, d.e, d.r), (3, 32, 64, 32, 3));
        assert_eq!(dims[0].name, "cov1");
        let d = &dims[1];
        assert_eq!((d.c, d.h, d.k, d.e, d.r), (64, 16, 128, 16, 3));
        let d = &dims[3];
        assert_eq!(d.name, "lin4");
        assert_eq!((d.c, d.h, d.k, d.e, d.r), (128 * 8 * 8, 1, 1024, 1, 1));
        let d = &dims[4];
        assert_eq!(d.name, "lin5");
        assert_eq!((d.c, d.k), (1024, 10));
    }

    #[test]
    fn conv_size_mismatch_is_rejected() {
        let cfg = KvConfig::parse("input = 3 32\nlayer = conv 8 4 3 0\nlayer = fc 10\n").unwrap();
        assert!(NetworkSpec::from_config(&cfg).is_err());
    }

    #[test]
    fn last_layer_must_be_fc() {
        let cfg = KvConfig::parse("input = 3 32\nlayer = conv 8 3 1 1\n").unwrap();
        assert!(NetworkSpec::from_config(&cfg).is_err());
    }
}
