use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::binary::{train_binary, BinaryModel, BinaryPoint, SolverParams};
use super::{label_weights, Strategy, SvmConfig};

/// Feature rows with their label ids.
#[derive(Clone, Debug)]
pub struct TrainingSet<'a, T> {
    rows: Vec<&'a [T]>,
    labels: Vec<usize>,
}

impl<'a, T: Scalar> TrainingSet<'a, T> {
    pub fn new(rows: Vec<&'a [T]>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(Error::Shape(format!(
                    "row of length {} among length {}",
                    bad.len(),
                    first.len()
                )));
            }
        }
        Ok(TrainingSet { rows, labels })
    }

    pub fn from_rows(rows: &'a [Vec<T>], labels: &[usize]) -> Result<Self> {
        Self::new(rows.iter().map(Vec::as_slice).collect(), labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[&'a [T]] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Distinct labels, ascending.
    pub fn label_set(&self) -> Vec<usize> {
        let mut set = self.labels.clone();
        set.sort_unstable();
        set.dedup();
        set
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassModel<T> {
    pub strategy: Strategy,
    /// Labels the model can emit, ascending.
    pub labels: Vec<usize>,
    /// OneVsOne: pairs (i, j), i < j, in lexicographic order with `label_pos = i`.
    /// OneVsAll: one model per label with `label_pos` = that label.
    pub binaries: Vec<BinaryModel<T>>,
}

/// Winning label plus the per-label evidence it was chosen from.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub label: usize,
    /// `(label, score)`: vote counts for OneVsOne, decision values for OneVsAll.
    pub scores: Vec<(usize, T)>,
    /// Raw decision value of every binary, in model order.
    pub decisions: Vec<T>,
}

impl<T: Scalar> MulticlassModel<T> {
    pub fn dim(&self) -> usize {
        self.binaries.first().map_or(0, |b| b.w.len())
    }

    pub fn predict(&self, x: &[T]) -> Result<Prediction<T>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let decisions: Vec<T> = self.binaries.iter().map(|b| b.decision(x)).collect();
        Ok(match self.strategy {
            Strategy::OneVsOne => self.vote(decisions),
            Strategy::OneVsAll => {
                let scores: Vec<(usize, T)> = self
                    .binaries
                    .iter()
                    .zip(&decisions)
                    .map(|(b, &d)| (b.label_pos, d))
                    .collect();
                let label = argmax_lowest(&scores);
                Prediction {
                    label,
                    scores,
                    decisions,
                }
            }
        })
    }

    fn vote(&self, decisions: Vec<T>) -> Prediction<T> {
        let k = self.labels.len();
        let index = |label: usize| self.labels.binary_search(&label).expect("pair label in set");
        let mut votes = vec![0usize; k];
        let mut strength = vec![T::zero(); k];
        for (b, &d) in self.binaries.iter().zip(&decisions) {
            let winner = if d > T::zero() { b.label_pos } else { b.label_neg };
            let i = index(winner);
            votes[i] += 1;
            strength[i] += d.abs();
        }
        let mut best = 0;
        for i in 1..k {
            let better = votes[i] > votes[best] || (votes[i] == votes[best] && strength[i] > strength[best]);
            if better {
                best = i;
            }
        }
        Prediction {
            label: self.labels[best],
            scores: self
                .labels
                .iter()
                .zip(&votes)
                .map(|(&l, &v)| (l, T::from_usize(v).unwrap()))
                .collect(),
            decisions,
        }
    }
}

fn argmax_lowest<T: Scalar>(scores: &[(usize, T)]) -> usize {
    let mut best = scores[0];
    for &(l, s) in &scores[1..] {
        if s > best.1 || (s == best.1 && l < best.0) {
            best = (l, s);
        }
    }
    best.0
}

pub fn train_multiclass<T: Scalar>(ts: &TrainingSet<'_, T>, cfg: &SvmConfig) -> Result<MulticlassModel<T>> {
    cfg.validate()?;
    let labels = ts.label_set();
    if labels.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "multiclass training needs at least 2 labels, found {labels:?}"
        )));
    }
    let weight_of: Vec<T> = if cfg.weighted {
        let w = label_weights(ts.labels(), &labels)?;
        let max = labels[labels.len() - 1];
        let mut table = vec![T::one(); max + 1];
        for (l, wl) in labels.iter().zip(w) {
            table[*l] = T::from_f64_lossy(wl);
        }
        table
    } else {
        vec![T::one(); labels[labels.len() - 1] + 1]
    };
    let c = T::from_f64_lossy(cfg.c);

    let jobs: Vec<(usize, usize)> = match cfg.strategy {
        Strategy::OneVsOne => {
            let mut pairs = Vec::new();
            for (a, &i) in labels.iter().enumerate() {
                for &j in &labels[a + 1..] {
                    pairs.push((i, j));
                }
            }
            pairs
        }
        // label_neg is unused for one-vs-rest, mark it with the label itself
        Strategy::OneVsAll => labels.iter().map(|&l| (l, l)).collect(),
    };

    let binaries = jobs
        .par_iter()
        .map(|&(pos, neg)| {
            let points: Vec<BinaryPoint<'_, T>> = ts
                .rows()
                .iter()
                .zip(ts.labels())
                .filter(|(_, &l)| cfg.strategy == Strategy::OneVsAll || l == pos || l == neg)
                .map(|(x, &l)| BinaryPoint {
                    x,
                    positive: l == pos,
                    weight: weight_of[l],
                })
                .collect();
            let params = SolverParams {
                tolerance: cfg.tolerance,
                max_iterations: cfg.max_iterations,
                seed: cfg.seed,
            };
            let fit = train_binary(&points, c, &params)?;
            if !fit.converged {
                log::debug!(
                    "binary {pos}/{neg} stopped after {} sweeps, violation {}",
                    fit.iterations,
                    fit.max_violation
                );
            }
            Ok(fit.into_model(pos, neg))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MulticlassModel {
        strategy: cfg.strategy,
        labels,
        binaries,
    })
}

pub fn predict<T: Scalar>(model: &MulticlassModel<T>, x: &[T]) -> Result<Prediction<T>> {
    model.predict(x)
}
