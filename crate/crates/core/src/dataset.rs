//! CK+ ingestion: sequence discovery, emotion labels, peak frames and the
//! feature design matrix with its on-disk cache.
//!
//! Expected layout (as distributed):
//!
//! ```text
//! <images>/S005/001/S005_001_00000001.png ... S005_001_00000011.png
//! <labels>/S005/001/S005_001_00000011_emotion.txt   ("   3.0000000e+00")
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::convnet::{LayerTap, Network};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::facedetect::{Cascade, DetectParams};
use crate::pipeline::{frame_input, Framing};
use crate::plane::ImagePlane;
use crate::tensorio::{self, Tensor, WeightBundle};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "pgm", "ppm"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub participant: String,
    pub sequence: String,
    /// Sorted by frame number.
    pub frames: Vec<PathBuf>,
    pub emotion: Option<Emotion>,
}

impl Sequence {
    pub fn key(&self) -> String {
        format!("{}/{}", self.participant, self.sequence)
    }

    pub fn peak_path(&self) -> Option<&Path> {
        self.frames.last().map(PathBuf::as_path)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub sequences_seen: usize,
    pub unlabelled: usize,
    /// Label files that could not be used, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl fmt::Display for ScanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sequences seen: {}", self.sequences_seen)?;
        writeln!(f, "without label: {}", self.unlabelled)?;
        writeln!(f, "skipped labels: {}", self.skipped.len())?;
        for (path, why) in &self.skipped {
            writeln!(f, "  {}: {why}", path.display())?;
        }
        Ok(())
    }
}

/// Labelled sequences sorted by participant, then sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sequences: Vec<Sequence>,
    pub report: ScanReport,
}

impl Corpus {
    pub fn participants(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.sequences.iter().map(|s| s.participant.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn label_counts(&self) -> [usize; crate::NUM_EMOTIONS] {
        let mut counts = [0; crate::NUM_EMOTIONS];
        for s in &self.sequences {
            if let Some(e) = s.emotion {
                counts[e.id()] += 1;
            }
        }
        counts
    }
}

fn sorted_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Trailing run of digits in the file stem, e.g. 11 for `S005_001_00000011.png`.
pub fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            if let Some(n) = frame_number(&p) {
                frames.push((n, p));
            }
        }
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Parse the numeric code in a CK+ `*_emotion.txt` file.
pub fn parse_emotion_code(text: &str) -> std::result::Result<Emotion, String> {
    let value: f64 = text
        .split_whitespace()
        .next()
        .ok_or("empty label file")?
        .parse()
        .map_err(|e| format!("bad label value: {e}"))?;
    if value.fract() != 0.0 || !(0.0..=7.0).contains(&value) {
        return Err(format!("label code {value} out of range"));
    }
    Emotion::from_ck_code(value as u32).ok_or_else(|| format!("label code {value} (neutral) rejected"))
}

fn read_label(dir: &Path, report: &mut ScanReport) -> Result<Option<Emotion>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| file_name(p).ends_with("_emotion.txt"))
        .collect();
    files.sort();
    let Some(path) = files.pop() else {
        return Ok(None);
    };
    let parsed = fs::read_to_string(&path)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_emotion_code(&t));
    match parsed {
        Ok(e) => Ok(Some(e)),
        Err(why) => {
            log::warn!("skipping {}: {why}", path.display());
            report.skipped.push((path, why));
            Ok(None)
        }
    }
}

pub fn scan_corpus(images_root: impl AsRef<Path>, labels_root: impl AsRef<Path>) -> Result<Corpus> {
    let (images_root, labels_root) = (images_root.as_ref(), labels_root.as_ref());
    for root in [images_root, labels_root] {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory"),
            ));
        }
    }
    let mut corpus = Corpus::default();
    for pdir in sorted_dirs(images_root)? {
        let participant = file_name(&pdir);
        for sdir in sorted_dirs(&pdir)? {
            let sequence = file_name(&sdir);
            let frames = list_frames(&sdir)?;
            if frames.is_empty() {
                continue;
            }
            corpus.report.sequences_seen += 1;
            let label_dir = labels_root.join(&participant).join(&sequence);
            match read_label(&label_dir, &mut corpus.report)? {
                Some(emotion) => corpus.sequences.push(Sequence {
                    participant: participant.clone(),
                    sequence,
                    frames,
                    emotion: Some(emotion),
                }),
                None => corpus.report.unlabelled += 1,
            }
        }
    }
    corpus.report.unlabelled -= corpus.report.skipped.len().min(corpus.report.unlabelled);
    Ok(corpus)
}

/// Last frame of the sequence.
pub fn peak_frame(seq: &Sequence) -> Result<ImagePlane> {
    let path = seq
        .peak_path()
        .ok_or_else(|| Error::DegenerateData(format!("sequence {} has no frames", seq.key())))?;
    ImagePlane::load(path)
}

#[derive(Clone, Copy, Debug)]
pub struct MatrixOptions<'a> {
    pub tap: LayerTap,
    /// `None` feeds full frames.
    pub face_detection: Option<(&'a Cascade, &'a DetectParams)>,
    /// NTC1 feature cache; read if present, rewritten when rows are added.
    pub cache: Option<&'a Path>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DesignMatrix {
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub participants: Vec<String>,
    /// `participant/sequence` per row.
    pub sequences: Vec<String>,
    /// Sequences dropped because extraction failed, with the error.
    pub dropped: Vec<(String, String)>,
    /// Rows where detection found nothing and the full frame was used.
    pub fallbacks: Vec<String>,
    pub cache_hits: usize,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features_f64(&self) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

pub fn cache_key(
    image: &Path,
    tap: LayerTap,
    face_detection: bool,
    cascade_digest: &[u8; 32],
    weights_fingerprint: &[u8; 32],
) -> String {
    let mut h = Sha256::new();
    h.update(image.to_string_lossy().as_bytes());
    h.update([0]);
    h.update(tap.name().as_bytes());
    h.update([face_detection as u8]);
    h.update(cascade_digest);
    h.update(weights_fingerprint);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Extracted {
    values: Vec<f32>,
    fallback: bool,
}

fn extract_one(seq: &Sequence, network: &Network<f32>, opts: &MatrixOptions<'_>) -> Result<Extracted> {
    let img = peak_frame(seq)?;
    let framing = match opts.face_detection {
        Some((c, p)) => Framing::Face(c, p),
        None => Framing::FullFrame,
    };
    let (input, fallback) = match frame_input(&img, framing) {
        Some((_, input)) => (input, false),
        None => {
            log::warn!("no face in {}, using full frame", seq.key());
            (img.to_gray(), true)
        }
    };
    let fv = network.extract(&input, opts.tap)?;
    Ok(Extracted {
        values: fv.into_values(),
        fallback,
    })
}

/// One feature row per labelled sequence, extracted in parallel.
pub fn build_design_matrix(
    corpus: &Corpus,
    network: &Network<f32>,
    opts: &MatrixOptions<'_>,
) -> Result<DesignMatrix> {
    let digest = opts.face_detection.map(|(c, _)| c.digest()).unwrap_or([0; 32]);
    let fingerprint = network.fingerprint();
    let keys: Vec<String> = corpus
        .sequences
        .iter()
        .map(|s| {
            cache_key(
                s.peak_path().unwrap_or(Path::new("")),
                opts.tap,
                opts.face_detection.is_some(),
                &digest,
                &fingerprint,
            )
        })
        .collect();

    let mut cache = match opts.cache {
        Some(path) if path.exists() => tensorio::load_raw(path)?,
        _ => WeightBundle::new(),
    };
    let cached: HashMap<&str, &[f32]> = cache
        .iter()
        .filter(|t| t.len() == opts.tap.dim())
        .map(|t| (t.name(), t.data()))
        .collect();

    let results: Vec<(bool, Result<Extracted>)> = corpus
        .sequences
        .par_iter()
        .zip(&keys)
        .map(|(seq, key)| match cached.get(key.as_str()) {
            Some(values) => (
                true,
                Ok(Extracted {
                    values: values.to_vec(),
                    fallback: false,
                }),
            ),
            None => (false, extract_one(seq, network, opts)),
        })
        .collect();
    drop(cached);

    let mut m = DesignMatrix::default();
    let mut fresh = Vec::new();
    for ((seq, key), (hit, result)) in corpus.sequences.iter().zip(&keys).zip(results) {
        match result {
            Ok(ex) => {
                if hit {
                    m.cache_hits += 1;
                } else {
                    fresh.push((key.clone(), ex.values.clone()));
                }
                if ex.fallback {
                    m.fallbacks.push(seq.key());
                }
                m.features.push(ex.values);
                m.labels.push(seq.emotion.map_or(0, Emotion::id));
                m.participants.push(seq.participant.clone());
                m.sequences.push(seq.key());
            }
            Err(e) => {
                log::warn!("dropping {}: {e}", seq.key());
                m.dropped.push((seq.key(), e.to_string()));
            }
        }
    }

    if let (Some(path), false) = (opts.cache, fresh.is_empty()) {
        for (key, values) in fresh {
            cache.insert(Tensor::vector(key, values)?)?;
        }
        tensorio::save_bundle(&cache, path)?;
    }
    Ok(m)
}
