//! Feed-forward execution of the pretrained five-conv / one-fc feature
//! network, with taps after conv5's pool and after fc6.

mod network;
pub mod ops;
pub mod preprocess;
pub mod topology;

pub use network::{extract_features, synthetic_bundle, zero_bundle, Network};
pub use ops::{conv_forward, fc_forward, lrn, max_pool, relu, LrnParams};
pub use preprocess::{preprocess, resize_bilinear};

pub use crate::plane::ImagePlane;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerTap {
    /// conv5 after relu and pool, flattened: 256·6·6 values.
    Layer5,
    /// fc6 after relu: 4096 values.
    Layer6,
}

impl LayerTap {
    pub fn dim(self) -> usize {
        match self {
            LayerTap::Layer5 => topology::LAYER5_DIM,
            LayerTap::Layer6 => topology::LAYER6_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerTap::Layer5 => "layer5",
            LayerTap::Layer6 => "layer6",
        }
    }
}

impl fmt::Display for LayerTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerTap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "layer5" | "5" => Ok(LayerTap::Layer5),
            "layer6" | "6" => Ok(LayerTap::Layer6),
            _ => Err(Error::Format(format!("unknown layer tap {s:?}"))),
        }
    }
}

/// Flattened activation at one tap.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T> {
    tap: LayerTap,
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(tap: LayerTap, values: Vec<T>) -> Result<Self> {
        if values.len() != tap.dim() {
            return Err(Error::Shape(format!(
                "{tap} feature needs {} values, got {}",
                tap.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptData(format!("{tap} feature has non-finite values")));
        }
        Ok(FeatureVector { tap, values })
    }

    pub fn tap(&self) -> LayerTap {
        self.tap
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}
