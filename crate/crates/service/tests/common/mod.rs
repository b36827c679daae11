#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ferkit::convnet::synthetic_bundle;
use ferkit::facedetect::parse_cascade;
use ferkit::pipeline::{frame_input, train_from_images, Framing, Recognizer};
use ferkit::{DetectParams, Emotion, ImagePlane, LayerTap, Network, Strategy, SvmConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn webcam_frame() -> ImagePlane {
    ImagePlane::load(fixtures().join("faces/webcam_frame.png")).unwrap()
}

/// Synthetic weights and a model that maps the webcam face crop to happiness.
pub fn recognizer() -> Recognizer {
    let network = Network::from_bundle(&synthetic_bundle(1)).unwrap();
    let cascade = parse_cascade(fixtures().join("cascades/haarcascade_frontalface_alt2.xml")).unwrap();
    let live = DetectParams::live();
    let dataset = DetectParams::dataset();

    let mut samples = Vec::new();
    let (_, happy) = frame_input(&webcam_frame(), Framing::Face(&cascade, &live)).expect("webcam face");
    samples.push((happy, Emotion::Happiness));
    let others = [Emotion::Anger, Emotion::Contempt, Emotion::Disgust, Emotion::Fear, Emotion::Sadness, Emotion::Surprise];
    for (i, e) in others.into_iter().enumerate() {
        let img = ImagePlane::load(fixtures().join(format!("faces/face_{i:02}.png"))).unwrap();
        let (_, crop) = frame_input(&img, Framing::Face(&cascade, &dataset)).expect("fixture face");
        samples.push((crop, e));
    }
    let cfg = SvmConfig::new(1.0, Strategy::OneVsOne);
    let model = train_from_images(&network, Framing::FullFrame, LayerTap::Layer5, &samples, &cfg).unwrap();
    Recognizer::new(network, Some(cascade), live, model, LayerTap::Layer5).unwrap()
}
