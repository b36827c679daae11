//! Facial expression recognition from pretrained convolutional features.
//!
//! The pipeline crops the largest Viola-Jones face, runs a fixed
//! five-conv / one-fc network up to layer 5 or layer 6 and classifies the
//! activations with linear SVMs combined one-versus-one or one-versus-all.
//! [`evaluator`] runs leave-one-participant-out experiments over CK+.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precisions used by the pipeline (f32 network, f64 SVM).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convnet;
pub mod dataset;
pub mod emotion;
pub mod error;
pub mod evaluator;
pub mod facedetect;
pub mod pipeline;
pub mod plane;
pub mod scalar;
pub mod svm;
pub mod tensorio;

pub use emotion::{Emotion, NUM_EMOTIONS};
pub use error::{Error, Result};
pub use plane::ImagePlane;
pub use scalar::Scalar;

pub use convnet::LayerTap;
pub use facedetect::{Cascade, DetectParams, FaceBox};
pub use svm::{Strategy, SvmConfig};
pub use tensorio::WeightBundle;

pub type Tensor = tensorio::Tensor<f32>;
pub type Tensor64 = tensorio::Tensor<f64>;
pub type Network = convnet::Network<f32>;
pub type FeatureVector = convnet::FeatureVector<f32>;
pub type BinaryModel = svm::BinaryModel<f64>;
pub type MulticlassModel = svm::MulticlassModel<f64>;
