//! Conjugate-Gaussian beliefs for distributed linear regression.
//!
//! Beliefs are kept in information form `(μ, Λ = Σ⁻¹)`: the Bayes update adds
//! `x̃x̃ᵀ/α²` to `Λ`, and the geometric-mean consensus is a convex combination
//! of precisions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::beliefs::{consensus_update, BeliefError, BeliefVector};
use crate::graph::ROW_SUM_TOLERANCE;
use crate::models::ParameterSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("precision matrix is not symmetric positive definite")]
    SingularPrecision,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("noise variance must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("consensus weights sum to {0}, expected 1")]
    WeightMismatch(f64),
    #[error("consensus weight {0} is negative or non-finite")]
    InvalidWeight(f64),
    #[error("consensus needs at least one input belief")]
    NoInputs,
    #[error("mean has a non-finite entry")]
    NonFiniteMean,
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

fn factor(precision: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, GaussianError> {
    let n = precision.nrows();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (precision[(i, j)], precision[(j, i)]);
            if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(GaussianError::SingularPrecision);
            }
        }
    }
    Cholesky::new(precision.clone()).ok_or(GaussianError::SingularPrecision)
}

/// `[1, xᵀ]ᵀ`.
pub fn augment(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()))
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self, GaussianError> {
        if precision.nrows() != mean.len() || precision.ncols() != mean.len() {
            return Err(GaussianError::DimensionMismatch { expected: mean.len(), found: precision.nrows() });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(GaussianError::NonFiniteMean);
        }
        factor(&precision)?;
        Ok(Self { mean, precision })
    }

    pub fn from_covariance(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, GaussianError> {
        let precision = factor(&covariance)?.inverse();
        Self::new(mean, symmetrize(precision))
    }

    /// Independent coordinates with the given variances.
    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self, GaussianError> {
        if variances.len() != mean.len() {
            return Err(GaussianError::DimensionMismatch { expected: mean.len(), found: variances.len() });
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GaussianError::SingularPrecision);
        }
        let precision =
            DMatrix::from_diagonal(&DVector::from_iterator(variances.len(), variances.iter().map(|v| 1.0 / v)));
        Self::new(DVector::from_vec(mean), precision)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>, GaussianError> {
        Ok(symmetrize(factor(&self.precision)?.inverse()))
    }

    /// Log density up to nothing: the full normalised Gaussian log-pdf.
    pub fn log_density(&self, point: &[f64]) -> f64 {
        let d = DVector::from_column_slice(point) - &self.mean;
        let quad = (d.transpose() * &self.precision * &d)[(0, 0)];
        let chol = Cholesky::new(self.precision.clone()).expect("validated precision");
        let log_det_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let k = self.dim() as f64;
        0.5 * log_det_prec - 0.5 * k * (2.0 * std::f64::consts::PI).ln() - 0.5 * quad
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Conjugate update with one observation `(x, y)`; `x` is augmented with a
/// leading 1 internally.
pub fn gaussian_bayes_update(
    prior: &GaussianBelief,
    x: &[f64],
    y: f64,
    noise_var: f64,
) -> Result<GaussianBelief, GaussianError> {
    let xt = augment(x);
    bayes_update_augmented(prior, &xt, y, noise_var)
}

pub fn bayes_update_augmented(
    prior: &GaussianBelief,
    xt: &DVector<f64>,
    y: f64,
    noise_var: f64,
) -> Result<GaussianBelief, GaussianError> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(GaussianError::InvalidNoise(noise_var));
    }
    if xt.len() != prior.dim() {
        return Err(GaussianError::DimensionMismatch { expected: prior.dim(), found: xt.len() });
    }
    let precision = &prior.precision + xt * xt.transpose() / noise_var;
    let info = &prior.precision * &prior.mean + xt * (y / noise_var);
    let mean = factor(&precision)?.solve(&info);
    GaussianBelief::new(mean, precision)
}

/// `Λ̃ = Σ_j w_j Λ_j`, `μ̃ = Λ̃⁻¹ Σ_j w_j Λ_j μ_j`.
pub fn gaussian_consensus(beliefs: &[(&GaussianBelief, f64)]) -> Result<GaussianBelief, GaussianError> {
    let first = beliefs.first().ok_or(GaussianError::NoInputs)?;
    let d = first.0.dim();
    let mut precision = DMatrix::zeros(d, d);
    let mut info = DVector::zeros(d);
    let mut total = 0.0;
    for (b, w) in beliefs {
        if b.dim() != d {
            return Err(GaussianError::DimensionMismatch { expected: d, found: b.dim() });
        }
        if !(w.is_finite() && *w >= 0.0) {
            return Err(GaussianError::InvalidWeight(*w));
        }
        total += w;
        if *w == 0.0 {
            continue;
        }
        precision += &b.precision * *w;
        info += &b.precision * &b.mean * *w;
    }
    if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(GaussianError::WeightMismatch(total));
    }
    let mean = factor(&precision)?.solve(&info);
    GaussianBelief::new(mean, precision)
}

/// Predictive `(⟨μ, x̃⟩, x̃ᵀΛ⁻¹x̃ + α²)`.
pub fn predictive(belief: &GaussianBelief, x: &[f64], noise_var: f64) -> Result<(f64, f64), GaussianError> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(GaussianError::InvalidNoise(noise_var));
    }
    let xt = augment(x);
    if xt.len() != belief.dim() {
        return Err(GaussianError::DimensionMismatch { expected: belief.dim(), found: xt.len() });
    }
    let solved = factor(&belief.precision)?.solve(&xt);
    Ok((belief.mean.dot(&xt), xt.dot(&solved) + noise_var))
}

/// Discretises each Gaussian on `grid` and merges them with the discrete
/// consensus rule. Used to certify [`gaussian_consensus`].
pub fn discretized_consensus_oracle(
    beliefs: &[(&GaussianBelief, f64)],
    grid: &ParameterSet,
) -> Result<BeliefVector, GaussianError> {
    let discretized: Vec<BeliefVector> = beliefs
        .iter()
        .map(|(b, _)| {
            if b.dim() != grid.dim() {
                return Err(GaussianError::DimensionMismatch { expected: grid.dim(), found: b.dim() });
            }
            Ok(BeliefVector::from_log_weights(grid.points().iter().map(|p| b.log_density(p)).collect()))
        })
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(&BeliefVector, f64)> = discretized.iter().zip(beliefs).map(|(d, (_, w))| (d, *w)).collect();
    Ok(consensus_update(&pairs, true)?.belief)
}
