//! Fixed layer table of the feature network.

use crate::error::{Error, Result};
use crate::tensorio::WeightBundle;

use super::ops::window_extent;

pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_SIDE: usize = 227;
pub const LAYER5_DIM: usize = 256 * 6 * 6;
pub const LAYER6_DIM: usize = 4096;
pub const MEAN: &str = "mean";
pub const POOL_KERNEL: usize = 3;
pub const POOL_STRIDE: usize = 2;

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub name: &'static str,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub lrn: bool,
    pub pool: bool,
}

impl ConvSpec {
    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        ]
    }
}

pub const CONVS: [ConvSpec; 5] = [
    ConvSpec { name: "conv1", out_channels: 96, in_channels: 3, kernel: 11, stride: 4, pad: 0, groups: 1, lrn: true, pool: true },
    ConvSpec { name: "conv2", out_channels: 256, in_channels: 96, kernel: 5, stride: 1, pad: 2, groups: 2, lrn: true, pool: true },
    ConvSpec { name: "conv3", out_channels: 384, in_channels: 256, kernel: 3, stride: 1, pad: 1, groups: 1, lrn: false, pool: false },
    ConvSpec { name: "conv4", out_channels: 384, in_channels: 384, kernel: 3, stride: 1, pad: 1, groups: 2, lrn: false, pool: false },
    ConvSpec { name: "conv5", out_channels: 256, in_channels: 384, kernel: 3, stride: 1, pad: 1, groups: 2, lrn: false, pool: true },
];

pub const FC6: &str = "fc6";

/// Every tensor a bundle must hold, with its exact shape.
pub fn required_tensors() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for c in CONVS {
        out.push((format!("{}.weight", c.name), c.weight_dims().to_vec()));
        out.push((format!("{}.bias", c.name), vec![c.out_channels]));
    }
    out.push((format!("{FC6}.weight"), vec![LAYER6_DIM, LAYER5_DIM]));
    out.push((format!("{FC6}.bias"), vec![LAYER6_DIM]));
    out.push((MEAN.to_owned(), vec![INPUT_CHANNELS, INPUT_SIDE, INPUT_SIDE]));
    out
}

/// Checks that the bundle holds exactly the required tensors with the right shapes.
pub fn validate(bundle: &WeightBundle) -> Result<()> {
    let required = required_tensors();
    for (name, dims) in &required {
        if let Some(t) = bundle.get(name) {
            if t.dims() != dims.as_slice() {
                return Err(Error::Topology(format!(
                    "{name} has dims {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
        }
    }
    for (name, _) in &required {
        bundle.require(name)?;
    }
    if let Some(extra) = bundle
        .names()
        .find(|n| !required.iter().any(|(r, _)| r == n))
    {
        return Err(Error::Topology(format!("unexpected tensor {extra:?}")));
    }
    Ok(())
}

/// Spatial shape after each conv block (post-pool where pooled), derived from the table.
pub fn trace_shapes() -> Result<Vec<[usize; 3]>> {
    let mut side = INPUT_SIDE;
    let mut channels = INPUT_CHANNELS;
    let mut shapes = Vec::new();
    for c in CONVS {
        if channels != c.in_channels {
            return Err(Error::Topology(format!(
                "{} expects {} channels, previous layer gives {channels}",
                c.name, c.in_channels
            )));
        }
        side = window_extent(side, c.kernel, c.stride, c.pad)
            .ok_or_else(|| Error::Topology(format!("{} kernel does not fit", c.name)))?;
        if c.pool {
            side = window_extent(side, POOL_KERNEL, POOL_STRIDE, 0)
                .ok_or_else(|| Error::Topology(format!("{} pool does not fit", c.name)))?;
        }
        channels = c.out_channels;
        shapes.push([channels, side, side]);
    }
    Ok(shapes)
}
