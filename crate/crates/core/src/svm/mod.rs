//! Linear soft-margin SVMs and their one-versus-one / one-versus-all ensembles.

mod binary;
mod io;
mod multiclass;

pub use binary::{train_binary, BinaryFit, BinaryModel, BinaryPoint, SolverParams};
pub use io::{load_model, model_from_bundle, model_to_bundle, save_model};
pub use multiclass::{predict, train_multiclass, MulticlassModel, Prediction, TrainingSet};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    OneVsOne,
    OneVsAll,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::OneVsOne => "ovo",
            Strategy::OneVsAll => "ova",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ovo" | "one-vs-one" | "onevsone" => Ok(Strategy::OneVsOne),
            "ova" | "ovr" | "one-vs-all" | "one-vs-rest" | "onevsall" => Ok(Strategy::OneVsAll),
            _ => Err(Error::Format(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub strategy: Strategy,
    /// Scale each point's penalty by its label's inverse frequency.
    pub weighted: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl SvmConfig {
    pub fn new(c: f64, strategy: Strategy) -> Self {
        SvmConfig {
            c,
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::DegenerateData(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::DegenerateData(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            strategy: Strategy::OneVsOne,
            weighted: true,
            tolerance: 1e-4,
            max_iterations: 10_000,
            seed: 0,
        }
    }
}

/// Balanced label weights `n_total / (k · n_label)` for each label of `label_set`.
pub fn label_weights(labels: &[usize], label_set: &[usize]) -> Result<Vec<f64>> {
    let k = label_set.len() as f64;
    let n = labels.len() as f64;
    label_set
        .iter()
        .map(|&l| {
            let count = labels.iter().filter(|&&x| x == l).count();
            if count == 0 {
                Err(Error::DegenerateData(format!("label {l} has no points")))
            } else {
                Ok(n / (k * count as f64))
            }
        })
        .collect()
}
