#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use ferkit::convnet::synthetic_bundle;
use ferkit::facedetect::parse_cascade;
use ferkit::pipeline::{frame_input, train_from_images, Framing};
use ferkit::{Cascade, DetectParams, Emotion, ImagePlane, LayerTap, MulticlassModel, Network, Strategy, SvmConfig};

pub const WEIGHTS: &str = "synthetic:1";
pub const SEED: u64 = 1;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn cascade_path() -> PathBuf {
    fixtures().join("cascades/haarcascade_frontalface_alt2.xml")
}

pub fn cascade() -> Cascade {
    parse_cascade(cascade_path()).unwrap()
}

pub fn face_image(i: usize) -> PathBuf {
    fixtures().join(format!("faces/face_{i:02}.png"))
}

pub fn webcam_path() -> PathBuf {
    fixtures().join("faces/webcam_frame.png")
}

pub fn network() -> Network {
    Network::from_bundle(&synthetic_bundle(SEED)).unwrap()
}

/// Model under synthetic weights that labels the webcam face happiness.
pub fn happy_model(network: &Network, cascade: &Cascade) -> MulticlassModel {
    let live = DetectParams::live();
    let dataset = DetectParams::dataset();
    let webcam = ImagePlane::load(webcam_path()).unwrap();
    let mut samples = vec![(
        frame_input(&webcam, Framing::Face(cascade, &live)).unwrap().1,
        Emotion::Happiness,
    )];
    let others = [Emotion::Anger, Emotion::Contempt, Emotion::Disgust, Emotion::Fear, Emotion::Sadness, Emotion::Surprise];
    for (i, e) in others.into_iter().enumerate() {
        let img = ImagePlane::load(face_image(i)).unwrap();
        samples.push((frame_input(&img, Framing::Face(cascade, &dataset)).unwrap().1, e));
    }
    train_from_images(network, Framing::FullFrame, LayerTap::Layer5, &samples, &SvmConfig::new(1.0, Strategy::OneVsOne))
        .unwrap()
}

/// CK+-shaped tree: three participants, two labelled sequences each, one unlabelled.
pub fn mini_corpus(root: &Path) -> (PathBuf, PathBuf) {
    let images = root.join("cohn-kanade-images");
    let labels = root.join("Emotion");
    let entries = [
        ("S010", "001", 0, 5),
        ("S010", "002", 1, 7),
        ("S011", "001", 2, 5),
        ("S011", "003", 3, 7),
        ("S012", "001", 4, 5),
        ("S012", "002", 5, 7),
    ];
    for (p, s, face, code) in entries {
        let dir = images.join(p).join(s);
        fs::create_dir_all(&dir).unwrap();
        let peak = ImagePlane::load(face_image(face)).unwrap();
        ImagePlane::filled(peak.width(), peak.height(), 100)
            .unwrap()
            .save_png(dir.join(format!("{p}_{s}_00000001.png")))
            .unwrap();
        peak.save_png(dir.join(format!("{p}_{s}_00000002.png"))).unwrap();
        let ldir = labels.join(p).join(s);
        fs::create_dir_all(&ldir).unwrap();
        fs::write(ldir.join(format!("{p}_{s}_00000002_emotion.txt")), format!("   {code}.0000000e+00\n")).unwrap();
    }
    let unlabelled = images.join("S012").join("004");
    fs::create_dir_all(&unlabelled).unwrap();
    ImagePlane::filled(32, 32, 5).unwrap().save_png(unlabelled.join("S012_004_00000001.png")).unwrap();
    (images, labels)
}
