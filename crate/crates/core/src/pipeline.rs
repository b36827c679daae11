//! Single-image path shared by batch classification and the live service:
//! grayscale, optional largest-face crop, feature extraction, prediction.

use crate::convnet::{FeatureVector, LayerTap, Network};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::facedetect::{crop_largest_face, Cascade, DetectParams, FaceBox};
use crate::plane::ImagePlane;
use crate::svm::MulticlassModel;

/// Where the network input comes from.
#[derive(Clone, Copy, Debug)]
pub enum Framing<'a> {
    /// Crop the largest detected face; `None` when nothing fires.
    Face(&'a Cascade, &'a DetectParams),
    /// Feed the whole frame.
    FullFrame,
}

/// Grayscale `img` and cut the network input out of it.
///
/// Returns the face box used, or `None` for a full-frame input. With
/// [`Framing::Face`] and no detection the result is `Ok(None)`.
pub fn frame_input(img: &ImagePlane, framing: Framing<'_>) -> Option<(Option<FaceBox>, ImagePlane)> {
    let gray = img.to_gray();
    match framing {
        Framing::FullFrame => Some((None, gray)),
        Framing::Face(cascade, params) => {
            crop_largest_face(&gray, cascade, params).map(|(face, crop)| (Some(face), crop))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub face: Option<FaceBox>,
    pub emotion: Emotion,
    /// Per-emotion score in canonical order: vote counts for one-vs-one,
    /// decision values for one-vs-all, zero for labels the model lacks.
    pub scores: [f64; crate::NUM_EMOTIONS],
    pub features: FeatureVector<f32>,
}

/// Everything needed to go from a frame to an emotion.
pub struct Recognizer {
    pub network: Network<f32>,
    /// Needed only for face-detected classification.
    pub cascade: Option<Cascade>,
    pub params: DetectParams,
    pub model: MulticlassModel<f64>,
    pub tap: LayerTap,
}

impl Recognizer {
    pub fn new(
        network: Network<f32>,
        cascade: Option<Cascade>,
        params: DetectParams,
        model: MulticlassModel<f64>,
        tap: LayerTap,
    ) -> Result<Self> {
        if model.dim() != tap.dim() {
            return Err(Error::Shape(format!(
                "model expects {} features but {tap} has {}",
                model.dim(),
                tap.dim()
            )));
        }
        Ok(Recognizer {
            network,
            cascade,
            params,
            model,
            tap,
        })
    }

    /// `Ok(None)` when face detection is on and finds nothing.
    pub fn classify(&self, img: &ImagePlane, face_detection: bool) -> Result<Option<Classification>> {
        let framing = match (&self.cascade, face_detection) {
            (_, false) => Framing::FullFrame,
            (Some(c), true) => Framing::Face(c, &self.params),
            (None, true) => return Err(Error::Format("face detection requested without a cascade".into())),
        };
        let Some((face, input)) = frame_input(img, framing) else {
            return Ok(None);
        };
        let features = self.network.extract(&input, self.tap)?;
        let (emotion, scores) = self.predict(&features)?;
        Ok(Some(Classification {
            face,
            emotion,
            scores,
            features,
        }))
    }

    pub fn predict(&self, features: &FeatureVector<f32>) -> Result<(Emotion, [f64; crate::NUM_EMOTIONS])> {
        let x: Vec<f64> = features.values().iter().map(|&v| v as f64).collect();
        let p = self.model.predict(&x)?;
        let emotion = Emotion::from_id(p.label)
            .ok_or_else(|| Error::Format(format!("model label {} is not an emotion", p.label)))?;
        let mut scores = [0.0; crate::NUM_EMOTIONS];
        for (l, s) in p.scores {
            if let Some(slot) = scores.get_mut(l) {
                *slot = s;
            }
        }
        Ok((emotion, scores))
    }
}

/// Fit a model directly on labelled images, framing each one the way
/// [`Recognizer::classify`] would. Images where detection finds nothing are skipped.
pub fn train_from_images(
    network: &Network<f32>,
    framing: Framing<'_>,
    tap: LayerTap,
    samples: &[(ImagePlane, Emotion)],
    cfg: &crate::svm::SvmConfig,
) -> Result<MulticlassModel<f64>> {
    use rayon::prelude::*;
    let rows: Vec<(Vec<f64>, usize)> = samples
        .par_iter()
        .filter_map(|(img, e)| frame_input(img, framing).map(|(_, input)| (input, *e)))
        .map(|(input, e)| {
            let fv = network.extract(&input, tap)?;
            Ok((fv.values().iter().map(|&v| v as f64).collect(), e.id()))
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<Vec<f64>>, Vec<usize>) = rows.into_iter().unzip();
    let ts = crate::svm::TrainingSet::from_rows(&xs, &ys)?;
    crate::svm::train_multiclass(&ts, cfg)
}
