use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plane::ImagePlane;
use crate::scalar::Scalar;
use crate::tensorio::{Tensor, WeightBundle};

use super::ops::{conv_forward, fc_forward, lrn, max_pool, relu_in_place, LrnParams};
use super::preprocess::preprocess;
use super::topology::{self, ConvSpec, CONVS, FC6, MEAN, POOL_KERNEL, POOL_STRIDE};
use super::{FeatureVector, LayerTap};

#[derive(Clone, Debug)]
struct ConvLayer<T> {
    spec: ConvSpec,
    weight: Tensor<T>,
    bias: Tensor<T>,
}

/// The pretrained feature network, immutable after construction.
#[derive(Debug)]
pub struct Network<T> {
    convs: Vec<ConvLayer<T>>,
    fc6_weight: Tensor<T>,
    fc6_bias: Tensor<T>,
    mean: Tensor<T>,
    lrn: LrnParams,
    fingerprint: OnceLock<[u8; 32]>,
}

impl<T: Scalar> Network<T> {
    /// Validates the bundle against the layer table and converts it to `T`.
    pub fn from_bundle(bundle: &WeightBundle) -> Result<Self> {
        topology::validate(bundle)?;
        let shapes = topology::trace_shapes()?;
        if shapes.last() != Some(&[256, 6, 6]) {
            return Err(Error::Topology(format!("conv5 output would be {:?}", shapes.last())));
        }
        let convs = CONVS
            .iter()
            .map(|spec| -> Result<ConvLayer<T>> {
                Ok(ConvLayer {
                    spec: *spec,
                    weight: bundle.require(&format!("{}.weight", spec.name))?.cast(),
                    bias: bundle.require(&format!("{}.bias", spec.name))?.cast(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            convs,
            fc6_weight: bundle.require(&format!("{FC6}.weight"))?.cast(),
            fc6_bias: bundle.require(&format!("{FC6}.bias"))?.cast(),
            mean: bundle.require(MEAN)?.cast(),
            lrn: LrnParams::default(),
            fingerprint: OnceLock::new(),
        })
    }

    pub fn mean(&self) -> &Tensor<T> {
        &self.mean
    }

    /// Runs the network on an already preprocessed `[3, 227, 227]` input.
    pub fn forward(&self, input: &Tensor<T>, tap: LayerTap) -> Result<FeatureVector<T>> {
        let mut x = input.clone();
        for layer in &self.convs {
            let s = &layer.spec;
            x = conv_forward(&x, &layer.weight, &layer.bias, s.stride, s.pad, s.groups)?;
            relu_in_place(&mut x);
            if s.lrn {
                x = lrn(&x, self.lrn)?;
            }
            if s.pool {
                x = max_pool(&x, POOL_KERNEL, POOL_STRIDE)?;
            }
        }
        if tap == LayerTap::Layer5 {
            return FeatureVector::new(tap, x.into_data());
        }
        let mut fc = fc_forward(&x, &self.fc6_weight, &self.fc6_bias)?;
        relu_in_place(&mut fc);
        FeatureVector::new(tap, fc.into_data())
    }

    pub fn extract(&self, img: &ImagePlane, tap: LayerTap) -> Result<FeatureVector<T>> {
        let input = preprocess(img, &self.mean)?;
        self.forward(&input, tap)
    }

    /// Content hash over every parameter, used to key feature caches.
    pub fn fingerprint(&self) -> [u8; 32] {
        *self.fingerprint.get_or_init(|| {
            let mut h = Sha256::new();
            let mut feed = |t: &Tensor<T>| {
                h.update(t.name().as_bytes());
                for d in t.dims() {
                    h.update((*d as u64).to_le_bytes());
                }
                for v in t.data() {
                    h.update(v.to_f64_lossy().to_le_bytes());
                }
            };
            for c in &self.convs {
                feed(&c.weight);
                feed(&c.bias);
            }
            feed(&self.fc6_weight);
            feed(&self.fc6_bias);
            feed(&self.mean);
            h.finalize().into()
        })
    }
}

/// Runs preprocessing and the network up to the requested tap.
pub fn extract_features<T: Scalar>(
    img: &ImagePlane,
    network: &Network<T>,
    tap: LayerTap,
) -> Result<FeatureVector<T>> {
    network.extract(img, tap)
}

/// Randomly initialised parameters with the full topology, for tests and
/// benchmarks where the pretrained export is not available. Weights are
/// uniform with He scaling, biases zero, mean constant 120.
pub fn synthetic_bundle(seed: u64) -> WeightBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundle = WeightBundle::new();
    for (name, dims) in topology::required_tensors() {
        let len: usize = dims.iter().product();
        let data = if name == MEAN {
            vec![120.0; len]
        } else if name.ends_with(".bias") {
            vec![0.0; len]
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let limit = (6.0 / fan_in as f32).sqrt();
            (0..len).map(|_| rng.gen_range(-limit..limit)).collect()
        };
        bundle
            .insert(Tensor::new(name, dims, data).expect("table shapes are valid"))
            .expect("table names are unique");
    }
    bundle
}

/// Bundle with the full topology and every value zero.
pub fn zero_bundle() -> WeightBundle {
    WeightBundle::from_tensors(
        topology::required_tensors()
            .into_iter()
            .map(|(name, dims)| Tensor::zeros(name, dims).expect("table shapes are valid")),
    )
    .expect("table names are unique")
}
