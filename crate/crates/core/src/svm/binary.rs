//! Dual coordinate descent for the L1-loss linear SVM.
//!
//! Maximises `Σα - ½‖Σ αᵢ yᵢ x̃ᵢ‖²` subject to `0 ≤ αᵢ ≤ Cᵢ`, where `x̃`
//! is `x` with a constant 1 appended so the bias is the last weight.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// One training vector with its sign and per-point penalty multiplier.
#[derive(Clone, Copy, Debug)]
pub struct BinaryPoint<'a, T> {
    pub x: &'a [T],
    pub positive: bool,
    pub weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tolerance: 1e-4,
            max_iterations: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryModel<T> {
    pub w: Vec<T>,
    pub b: T,
    pub label_pos: usize,
    pub label_neg: usize,
}

impl<T: Scalar> BinaryModel<T> {
    pub fn decision(&self, x: &[T]) -> T {
        dot(&self.w, x) + self.b
    }

    /// Label on the side of the hyperplane `x` falls; zero goes to the negative label.
    pub fn classify(&self, x: &[T]) -> usize {
        if self.decision(x) > T::zero() {
            self.label_pos
        } else {
            self.label_neg
        }
    }
}

#[derive(Clone, Debug)]
pub struct BinaryFit<T> {
    pub w: Vec<T>,
    pub b: T,
    pub alpha: Vec<T>,
    pub upper: Vec<T>,
    /// Dual objective after each sweep.
    pub objective: Vec<T>,
    pub iterations: usize,
    pub max_violation: T,
    pub converged: bool,
}

impl<T: Scalar> BinaryFit<T> {
    pub fn into_model(self, label_pos: usize, label_neg: usize) -> BinaryModel<T> {
        BinaryModel {
            w: self.w,
            b: self.b,
            label_pos,
            label_neg,
        }
    }

    pub fn decision(&self, x: &[T]) -> T {
        dot(&self.w, x) + self.b
    }
}

fn dual_objective<T: Scalar>(alpha: &[T], w: &[T], b: T) -> T {
    let sum: T = alpha.iter().copied().sum();
    sum - T::from_f64_lossy(0.5) * (dot(w, w) + b * b)
}

pub fn train_binary<T: Scalar>(
    points: &[BinaryPoint<'_, T>],
    c: T,
    params: &SolverParams,
) -> Result<BinaryFit<T>> {
    if !(c > T::zero()) {
        return Err(Error::DegenerateData(format!("soft-margin parameter must be positive, got {c}")));
    }
    if !(params.tolerance > 0.0) {
        return Err(Error::DegenerateData("solver tolerance must be positive".into()));
    }
    let npos = points.iter().filter(|p| p.positive).count();
    if npos == 0 || npos == points.len() {
        return Err(Error::DegenerateData(format!(
            "binary problem needs both signs ({npos} positive of {})",
            points.len()
        )));
    }
    let dim = points[0].x.len();
    if let Some(p) = points.iter().find(|p| p.x.len() != dim) {
        return Err(Error::Shape(format!("point of length {} among length {dim}", p.x.len())));
    }

    let n = points.len();
    let y: Vec<T> = points
        .iter()
        .map(|p| if p.positive { T::one() } else { -T::one() })
        .collect();
    let upper: Vec<T> = points.iter().map(|p| c * p.weight).collect();
    if upper.iter().any(|u| !(*u > T::zero())) {
        return Err(Error::DegenerateData("point weights must be positive".into()));
    }
    let diag: Vec<T> = points.iter().map(|p| dot(p.x, p.x) + T::one()).collect();
    let mut alpha = vec![T::zero(); n];
    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tol = T::from_f64_lossy(params.tolerance);
    let mut objective = Vec::new();
    let mut max_violation = T::infinity();
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        order.shuffle(&mut rng);
        let mut violation = T::zero();
        for &i in &order {
            let x = points[i].x;
            let g = y[i] * (dot(&w, x) + b) - T::one();
            let pg = if alpha[i] <= T::zero() {
                g.min(T::zero())
            } else if alpha[i] >= upper[i] {
                g.max(T::zero())
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg != T::zero() {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).max(T::zero()).min(upper[i]);
                let step = (alpha[i] - old) * y[i];
                if step != T::zero() {
                    for (wj, &xj) in w.iter_mut().zip(x) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        objective.push(dual_objective(&alpha, &w, b));
        max_violation = violation;
        if violation < tol {
            break;
        }
    }
    Ok(BinaryFit {
        w,
        b,
        alpha,
        upper,
        objective,
        iterations,
        converged: max_violation < tol,
        max_violation,
    })
}
