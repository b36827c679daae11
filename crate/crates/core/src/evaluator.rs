//! Leave-one-participant-out evaluation, confusion matrices and the
//! layer × strategy × C experiment grid.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::convnet::LayerTap;
use crate::dataset::DesignMatrix;
use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::svm::{train_multiclass, Strategy, SvmConfig, TrainingSet};

/// C values swept when none are given.
pub const DEFAULT_C_GRID: [f64; 8] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub participant: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Panics if any fold mixes a participant across train and test,
    /// or a row is tested more or less than once.
    pub fn assert_valid<S: AsRef<str>>(&self, participants: &[S]) {
        let mut tested = vec![0usize; participants.len()];
        for fold in &self.folds {
            let test: BTreeSet<&str> = fold.test.iter().map(|&i| participants[i].as_ref()).collect();
            let train: BTreeSet<&str> = fold.train.iter().map(|&i| participants[i].as_ref()).collect();
            assert!(
                test.is_disjoint(&train),
                "participant leakage in fold {}",
                fold.participant
            );
            assert_eq!(fold.train.len() + fold.test.len(), participants.len());
            for &i in &fold.test {
                tested[i] += 1;
            }
        }
        assert!(tested.iter().all(|&n| n == 1), "rows not tested exactly once");
    }
}

/// One fold per distinct participant, in sorted id order.
pub fn make_folds<S: AsRef<str>>(participants: &[S]) -> Result<FoldPlan> {
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in participants.iter().enumerate() {
        rows.entry(p.as_ref()).or_default().push(i);
    }
    if rows.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "leave-one-participant-out needs at least 2 participants, found {}",
            rows.len()
        )));
    }
    let folds = rows
        .iter()
        .map(|(&p, test)| Fold {
            participant: p.to_string(),
            train: (0..participants.len())
                .filter(|&i| participants[i].as_ref() != p)
                .collect(),
            test: test.clone(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Rows are true labels, columns predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_EMOTIONS]; NUM_EMOTIONS],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_EMOTIONS]; NUM_EMOTIONS]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, label: usize) -> u64 {
        self.counts[label].iter().sum()
    }

    /// Per-label recall in percent; `None` for an empty row.
    pub fn recalls(&self) -> [Option<f64>; NUM_EMOTIONS] {
        std::array::from_fn(|l| {
            let n = self.row_total(l);
            (n > 0).then(|| 100.0 * self.counts[l][l] as f64 / n as f64)
        })
    }

    /// Row-normalised percentages; empty rows stay zero.
    pub fn percentages(&self) -> [[f64; NUM_EMOTIONS]; NUM_EMOTIONS] {
        std::array::from_fn(|t| {
            let n = self.row_total(t);
            std::array::from_fn(|p| {
                if n == 0 {
                    0.0
                } else {
                    100.0 * self.counts[t][p] as f64 / n as f64
                }
            })
        })
    }

    /// Mean per-label recall, as a percentage.
    pub fn macro_accuracy(&self) -> Result<f64> {
        let recalls = self.recalls();
        let empty: Vec<&str> = recalls
            .iter()
            .zip(Emotion::ALL)
            .filter(|(r, _)| r.is_none())
            .map(|(_, e)| e.name())
            .collect();
        if !empty.is_empty() {
            return Err(Error::UndefinedMetric(format!(
                "no test rows for {}",
                empty.join(", ")
            )));
        }
        Ok(recalls.iter().flatten().sum::<f64>() / NUM_EMOTIONS as f64)
    }

    /// Counts with a header row and column of emotion codes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for e in Emotion::ALL {
            out.push(',');
            out.push_str(e.short());
        }
        out.push('\n');
        for e in Emotion::ALL {
            out.push_str(e.short());
            for c in self.counts[e.id()] {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Mean per-label recall of `cm`, in percent.
pub fn macro_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.macro_accuracy()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LosoOutcome {
    pub confusion: ConfusionMatrix,
    /// Per-fold notes, e.g. labels missing from a training split.
    pub notes: Vec<String>,
    pub folds: usize,
}

fn run_fold(features: &[Vec<f64>], labels: &[usize], fold: &Fold, cfg: &SvmConfig) -> Result<(ConfusionMatrix, Vec<String>)> {
    let mut notes = Vec::new();
    let train_labels: Vec<usize> = fold.train.iter().map(|&i| labels[i]).collect();
    let present: BTreeSet<usize> = train_labels.iter().copied().collect();
    let missing: Vec<usize> = fold
        .test
        .iter()
        .map(|&i| labels[i])
        .filter(|l| !present.contains(l))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        let note = format!("fold {}: labels {missing:?} absent from training", fold.participant);
        log::info!("{note}");
        notes.push(note);
    }
    let mut cm = ConfusionMatrix::new();
    if present.len() == 1 {
        let only = *present.iter().next().unwrap();
        notes.push(format!("fold {}: single training label {only}", fold.participant));
        for &i in &fold.test {
            cm.record(labels[i], only);
        }
        return Ok((cm, notes));
    }
    let rows: Vec<&[f64]> = fold.train.iter().map(|&i| features[i].as_slice()).collect();
    let ts = TrainingSet::new(rows, train_labels)?;
    let model = train_multiclass(&ts, cfg)?;
    for &i in &fold.test {
        cm.record(labels[i], model.predict(&features[i])?.label);
    }
    Ok((cm, notes))
}

/// Train on each fold's training rows and pool test predictions.
pub fn run_loso(features: &[Vec<f64>], labels: &[usize], plan: &FoldPlan, cfg: &SvmConfig) -> Result<LosoOutcome> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_EMOTIONS) {
        return Err(Error::Shape(format!("label {bad} outside 0..{NUM_EMOTIONS}")));
    }
    let per_fold = plan
        .folds
        .par_iter()
        .map(|fold| run_fold(features, labels, fold, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut outcome = LosoOutcome {
        confusion: ConfusionMatrix::new(),
        notes: Vec::new(),
        folds: plan.folds.len(),
    };
    for (cm, notes) in per_fold {
        outcome.confusion.merge(&cm);
        outcome.notes.extend(notes);
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub tap: LayerTap,
    pub strategy: Strategy,
    pub c_values: Vec<f64>,
    pub weighted: bool,
    pub face_detection: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.c_values.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::DegenerateData(format!(
                "C values must be non-empty and positive, got {:?}",
                self.c_values
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub tap: LayerTap,
    pub strategy: Strategy,
    pub c: f64,
    pub face_detection: bool,
    pub macro_accuracy: f64,
    pub recalls: [f64; NUM_EMOTIONS],
    pub confusion: ConfusionMatrix,
}

pub fn grid_csv_header() -> String {
    let mut h = String::from("tap,strategy,c,face_detection,macro_accuracy");
    for e in Emotion::ALL {
        write!(h, ",recall_{}", e.name()).unwrap();
    }
    h
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = grid_csv_header();
    out.push('\n');
    for r in rows {
        write!(
            out,
            "{},{},{:e},{},{:.4}",
            r.tap, r.strategy, r.c, r.face_detection, r.macro_accuracy
        )
        .unwrap();
        for v in r.recalls {
            write!(out, ",{v:.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Design matrices keyed by (tap, face detection).
pub type MatrixSources = HashMap<(LayerTap, bool), DesignMatrix>;

/// One row per (spec, C); `base` supplies the solver settings.
pub fn run_experiment_grid(specs: &[ExperimentSpec], sources: &MatrixSources, base: &SvmConfig) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        spec.validate()?;
        let m = sources.get(&(spec.tap, spec.face_detection)).ok_or_else(|| {
            let what = format!(
                "feature cache for tap={} face_detection={}",
                spec.tap, spec.face_detection
            );
            Error::io(what, std::io::Error::new(std::io::ErrorKind::NotFound, "not available"))
        })?;
        let features = m.features_f64();
        let plan = make_folds(&m.participants)?;
        plan.assert_valid(&m.participants);
        for &c in &spec.c_values {
            let cfg = SvmConfig {
                c,
                strategy: spec.strategy,
                weighted: spec.weighted,
                ..*base
            };
            let outcome = run_loso(&features, &m.labels, &plan, &cfg)?;
            let cm = outcome.confusion;
            let macro_accuracy = cm.macro_accuracy().unwrap_or(f64::NAN);
            log::info!(
                "{} {} C={c:e} face_detection={}: {macro_accuracy:.2}",
                spec.tap,
                spec.strategy,
                spec.face_detection
            );
            rows.push(GridRow {
                tap: spec.tap,
                strategy: spec.strategy,
                c,
                face_detection: spec.face_detection,
                macro_accuracy,
                recalls: cm.recalls().map(|r| r.unwrap_or(f64::NAN)),
                confusion: cm,
            });
        }
    }
    Ok(rows)
}
