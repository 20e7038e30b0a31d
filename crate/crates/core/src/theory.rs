//! Sample-complexity and risk bounds.

use serde::Serialize;
use thiserror::Error;

use crate::models::{LikelihoodModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("invalid bound input `{field}`: {reason}")]
    InvalidInputs { field: &'static str, reason: String },
    #[error("{expected} estimates expected, got {found}")]
    EstimateCount { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inputs to the sample-complexity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub n_nodes: usize,
    pub n_params: usize,
    pub delta: f64,
    /// `|ln(L / α)|`.
    pub c: f64,
    /// `K(Θ)`; `f64::INFINITY` when nothing needs distinguishing.
    pub k_theta: f64,
    pub lambda_max: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |field, reason: &str| Err(TheoryError::InvalidInputs { field, reason: reason.into() });
        if self.n_nodes == 0 {
            return bad("n_nodes", "must be at least 1");
        }
        if self.n_params == 0 {
            return bad("n_params", "must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad("c", "must be positive and finite");
        }
        if self.k_theta.is_nan() || self.k_theta <= 0.0 {
            return bad("k_theta", "must be positive");
        }
        if !(0.0..1.0).contains(&self.lambda_max) {
            return bad("lambda_max", "must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Real-valued bound `16 C ln(N M / δ) / (K² (1 - λ_max))` before rounding.
pub fn sample_complexity_real(inputs: &BoundInputs) -> Result<f64, TheoryError> {
    inputs.validate()?;
    if inputs.k_theta.is_infinite() {
        return Ok(1.0);
    }
    let nm = (inputs.n_nodes * inputs.n_params) as f64;
    Ok(16.0 * inputs.c * (nm / inputs.delta).ln() / (inputs.k_theta * inputs.k_theta * (1.0 - inputs.lambda_max)))
}

/// Number of rounds after which every node's estimate lies in `Θ*` with
/// probability at least `1 - δ`.
pub fn sample_complexity(inputs: &BoundInputs) -> Result<u64, TheoryError> {
    let n = sample_complexity_real(inputs)?;
    Ok((n.ceil() as u64).max(1))
}

/// `B √r / 2`.
pub fn risk_bound(b: f64, r: f64) -> f64 {
    assert!(b >= 0.0 && r >= 0.0, "risk_bound needs B >= 0 and r >= 0");
    b * r.sqrt() / 2.0
}

/// Terms of the risk-gap chain, each averaged over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskChain {
    /// `(1/N) Σ_i |R_i(θ*) - R_i(θ̂_i)|`.
    pub gap: f64,
    /// `(B/N) Σ_i E[∫ |l_i(y; θ*) - l_i(y; θ̂_i)| dy]`.
    pub l1_term: f64,
    /// `(B/N) Σ_i E[√(2 D_KL(l_i(θ*) ‖ l_i(θ̂_i)))]`.
    pub pinsker_term: f64,
    /// `B √((2/N) Σ_i E[D_KL(l_i(θ*) ‖ l_i(θ̂_i))])`.
    pub jensen_term: f64,
    /// `(1/N) Σ_i E[D_KL(l_i(θ*) ‖ l_i(θ̂_i))]`.
    pub mean_kl: f64,
}

/// Monte Carlo evaluation of the risk-gap chain for per-node estimates.
///
/// `R_i(θ) = E_{P_i}[∫ r(x, y) l_i(y; θ, x) dy]`; the instance draws are
/// shared between `θ*` and every estimate.
pub fn risk_chain(
    models: &[LikelihoodModel],
    truth: &[f64],
    estimates: &[&[f64]],
    risk_fn: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    b: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<RiskChain, TheoryError> {
    if estimates.len() != models.len() {
        return Err(TheoryError::EstimateCount { expected: models.len(), found: estimates.len() });
    }
    let n = models.len() as f64;
    let mut chain = RiskChain { gap: 0.0, l1_term: 0.0, pinsker_term: 0.0, jensen_term: 0.0, mean_kl: 0.0 };
    for (m, est) in models.iter().zip(estimates) {
        let points = m.expectation_points(mc_samples, seed);
        let (mut r_star, mut r_hat, mut l1, mut sqrt_kl, mut kl) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, w) in &points {
            let ls = m.label_dist(truth, x)?;
            let lh = m.label_dist(est, x)?;
            r_star += w * ls.expect(|y| risk_fn(x, y));
            r_hat += w * lh.expect(|y| risk_fn(x, y));
            l1 += w * ls.l1_distance(&lh);
            let k = ls.kl(&lh);
            sqrt_kl += w * (2.0 * k).sqrt();
            kl += w * k;
        }
        chain.gap += (r_star - r_hat).abs() / n;
        chain.l1_term += b * l1 / n;
        chain.pinsker_term += b * sqrt_kl / n;
        chain.mean_kl += kl / n;
    }
    chain.jensen_term = b * (2.0 * chain.mean_kl).sqrt();
    Ok(chain)
}

/// Left-hand side of the risk chain: `(1/N) Σ_i |R_i(θ*) - R_i(θ̂_i)|`.
pub fn empirical_risk_gap(
    models: &[LikelihoodModel],
    truth: &[f64],
    estimates: &[&[f64]],
    risk_fn: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    mc_samples: usize,
    seed: u64,
) -> Result<f64, TheoryError> {
    Ok(risk_chain(models, truth, estimates, risk_fn, 1.0, mc_samples, seed)?.gap)
}
