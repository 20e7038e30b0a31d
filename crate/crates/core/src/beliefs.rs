//! Discrete beliefs over a finite parameter set, kept in natural-log space.

use thiserror::Error;

use crate::graph::ROW_SUM_TOLERANCE;
use crate::models::{LikelihoodModel, ModelError, ParameterSet};

/// Log-weights more than this far below the maximum are clamped before
/// normalisation.
pub const LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("belief has {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("consensus weights sum to {0}, expected 1")]
    WeightMismatch(f64),
    #[error("consensus weight {0} is negative or non-finite")]
    InvalidWeight(f64),
    #[error("consensus needs at least one input belief")]
    NoInputs,
    #[error("likelihood of the observation is zero under every parameter")]
    ZeroLikelihoodAllTheta,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Belief mass per parameter index, stored as natural logs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    log_weights: Vec<f64>,
    normalized: bool,
}

/// `ln Σ exp(v)`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl BeliefVector {
    pub fn uniform(m: usize) -> Self {
        assert!(m >= 1, "belief needs at least one parameter");
        Self { log_weights: vec![-(m as f64).ln(); m], normalized: true }
    }

    /// Unnormalised log-weights (may be shifted by any constant).
    pub fn from_log_weights(log_weights: Vec<f64>) -> Self {
        Self { log_weights, normalized: false }
    }

    /// Normalises non-negative masses; zero masses sit at the log floor.
    pub fn from_probs(probs: &[f64]) -> Self {
        let logs = probs.iter().map(|p| p.ln()).collect();
        Self::from_log_weights(logs).normalized().0
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn probs(&self) -> Vec<f64> {
        let lse = if self.normalized { 0.0 } else { log_sum_exp(&self.log_weights) };
        self.log_weights.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Returns the normalised belief and whether the log floor fired.
    pub fn normalized(&self) -> (Self, bool) {
        normalize_logs(self.log_weights.clone())
    }

    /// Adds `shift` to every log-weight, leaving the represented belief intact.
    pub fn shifted(&self, shift: f64) -> Self {
        Self::from_log_weights(self.log_weights.iter().map(|l| l + shift).collect())
    }
}

fn normalize_logs(mut logs: Vec<f64>) -> (BeliefVector, bool) {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut clamped = false;
    for l in logs.iter_mut() {
        let rel = *l - m;
        if rel.is_nan() || rel < LOG_FLOOR {
            *l = LOG_FLOOR;
            clamped = true;
        } else {
            *l = rel;
        }
    }
    let lse = log_sum_exp(&logs);
    for l in logs.iter_mut() {
        *l -= lse;
    }
    (BeliefVector { log_weights: logs, normalized: true }, clamped)
}

/// Outcome of an update: the normalised belief and whether the log floor
/// was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Updated {
    pub belief: BeliefVector,
    pub clamped: bool,
}

pub fn uniform_prior(m: usize) -> BeliefVector {
    BeliefVector::uniform(m)
}

/// Posterior `∝ exp(log_lik[θ]) · prior(θ)`.
pub fn update_with_log_likelihoods(prior: &BeliefVector, log_lik: &[f64]) -> Result<Updated, BeliefError> {
    if log_lik.len() != prior.len() {
        return Err(BeliefError::DimensionMismatch { expected: prior.len(), found: log_lik.len() });
    }
    if log_lik.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(BeliefError::ZeroLikelihoodAllTheta);
    }
    let logs = prior.log_weights.iter().zip(log_lik).map(|(p, l)| p + l).collect();
    let (belief, clamped) = normalize_logs(logs);
    Ok(Updated { belief, clamped })
}

/// Local Bayesian step for one observation `(x, y)`.
pub fn bayesian_update(
    prior: &BeliefVector,
    model: &LikelihoodModel,
    theta: &ParameterSet,
    x: &[f64],
    y: f64,
) -> Result<Updated, BeliefError> {
    let log_lik = theta.points().iter().map(|p| model.log_likelihood(y, p, x)).collect::<Result<Vec<_>, _>>()?;
    update_with_log_likelihoods(prior, &log_lik)
}

/// Weighted geometric-mean consensus: log-mass `Σ_j w_j log b_j(θ)`, then
/// normalised. Inputs may be unnormalised; a constant shift of any input's
/// log-weights does not change the result.
pub fn consensus_update(publics: &[(&BeliefVector, f64)], row_sum_check: bool) -> Result<Updated, BeliefError> {
    let first = publics.first().ok_or(BeliefError::NoInputs)?;
    let m = first.0.len();
    let mut total = 0.0;
    for (b, w) in publics {
        if b.len() != m {
            return Err(BeliefError::DimensionMismatch { expected: m, found: b.len() });
        }
        if !(w.is_finite() && *w >= 0.0) {
            return Err(BeliefError::InvalidWeight(*w));
        }
        total += w;
    }
    if row_sum_check && (total - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(BeliefError::WeightMismatch(total));
    }
    let mut logs = vec![0.0; m];
    for (b, w) in publics {
        if *w == 0.0 {
            continue;
        }
        // Centre each input so large unnormalised offsets cancel exactly.
        let c = b.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (acc, l) in logs.iter_mut().zip(&b.log_weights) {
            *acc += w * (l - c);
        }
    }
    let (belief, clamped) = normalize_logs(logs);
    Ok(Updated { belief, clamped })
}

/// Index of the largest belief mass; ties go to the lowest index.
pub fn map_estimate(belief: &BeliefVector) -> usize {
    let mut best = 0;
    for (k, l) in belief.log_weights.iter().enumerate() {
        if *l > belief.log_weights[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{InstanceSpace, LabelFamily, Link};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn assert_probs(b: &BeliefVector, expected: &[f64], eps: f64) {
        for (p, e) in b.probs().iter().zip(expected) {
            assert_abs_diff_eq!(*p, *e, epsilon = eps);
        }
    }

    #[test]
    fn uniform_prior_values() {
        let b = uniform_prior(4);
        assert!(b.log_weights().iter().all(|l| (*l - 0.25f64.ln()).abs() < 1e-15));
        assert_eq!(uniform_prior(1).log_weights(), &[0.0]);
        assert_abs_diff_eq!(uniform_prior(10).probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bernoulli_hand_posterior() {
        let theta = ParameterSet::new(vec![vec![0.9], vec![0.5]]).unwrap();
        let model = LikelihoodModel::new(
            0,
            InstanceSpace::discrete(vec![vec![1.0]], vec![1.0]),
            LabelFamily::Bernoulli { link: Link::Identity },
            vec![0.9],
        )
        .unwrap();
        let post = bayesian_update(&uniform_prior(2), &model, &theta, &[1.0], 1.0).unwrap();
        assert_probs(&post.belief, &[9.0 / 14.0, 5.0 / 14.0], 1e-12);
        assert!(!post.clamped);
    }

    #[test]
    fn constant_likelihood_keeps_prior() {
        let prior = BeliefVector::from_probs(&[0.1, 0.6, 0.3]);
        let post = update_with_log_likelihoods(&prior, &[-2.0; 3]).unwrap();
        assert_probs(&post.belief, &[0.1, 0.6, 0.3], 1e-12);
    }

    #[test]
    fn point_mass_prior_stays_point_mass() {
        let prior = BeliefVector::from_probs(&[1.0, 0.0, 0.0]);
        let post = update_with_log_likelihoods(&prior, &[-3.0, -0.1, -0.2]).unwrap();
        let p = post.belief.probs();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_eq!(map_estimate(&post.belief), 0);
    }

    #[test]
    fn all_zero_likelihood_is_an_error() {
        let err = update_with_log_likelihoods(&uniform_prior(2), &[f64::NEG_INFINITY; 2]).unwrap_err();
        assert_eq!(err, BeliefError::ZeroLikelihoodAllTheta);
    }

    #[test]
    fn consensus_examples() {
        let b = BeliefVector::from_probs(&[0.2, 0.5, 0.3]);
        let out = consensus_update(&[(&b, 0.3), (&b, 0.7)], true).unwrap();
        assert_probs(&out.belief, &[0.2, 0.5, 0.3], 1e-12);

        let a = BeliefVector::from_probs(&[0.8, 0.2]);
        let c = BeliefVector::from_probs(&[0.2, 0.8]);
        let out = consensus_update(&[(&a, 0.5), (&c, 0.5)], true).unwrap();
        assert_probs(&out.belief, &[0.5, 0.5], 1e-12);

        let out = consensus_update(&[(&a, 0.0), (&c, 1.0)], true).unwrap();
        assert_probs(&out.belief, &[0.2, 0.8], 1e-12);
    }

    #[test]
    fn consensus_errors() {
        let a = uniform_prior(2);
        let b = uniform_prior(3);
        assert!(matches!(consensus_update(&[(&a, 0.5), (&a, 0.6)], true), Err(BeliefError::WeightMismatch(_))));
        assert!(consensus_update(&[(&a, 0.5), (&a, 0.6)], false).is_ok());
        assert!(matches!(consensus_update(&[(&a, 0.5), (&b, 0.5)], true), Err(BeliefError::DimensionMismatch { .. })));
        assert_eq!(consensus_update(&[], true).unwrap_err(), BeliefError::NoInputs);
    }

    #[test]
    fn map_estimate_tie_breaks_low() {
        assert_eq!(map_estimate(&BeliefVector::from_probs(&[0.1, 0.7, 0.2])), 1);
        assert_eq!(map_estimate(&BeliefVector::from_probs(&[0.5, 0.5])), 0);
        assert_eq!(map_estimate(&uniform_prior(10)), 0);
    }

    proptest! {
        #[test]
        fn consensus_ignores_log_shifts(
            logs in prop::collection::vec(prop::collection::vec(-30.0f64..0.0, 5), 1..5),
            raw_w in prop::collection::vec(0.01f64..1.0, 5),
            shifts in prop::collection::vec(-200.0f64..200.0, 5),
        ) {
            let k = logs.len();
            let total: f64 = raw_w[..k].iter().sum();
            let beliefs: Vec<BeliefVector> = logs.into_iter().map(BeliefVector::from_log_weights).collect();
            let shifted: Vec<BeliefVector> = beliefs.iter().zip(&shifts).map(|(b, s)| b.shifted(*s)).collect();
            let pairs: Vec<_> = beliefs.iter().zip(&raw_w).map(|(b, w)| (b, w / total)).collect();
            let spairs: Vec<_> = shifted.iter().zip(&raw_w).map(|(b, w)| (b, w / total)).collect();
            let a = consensus_update(&pairs, true).unwrap().belief.probs();
            let b = consensus_update(&spairs, true).unwrap().belief.probs();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn batch_update_is_order_invariant(
            lls in prop::collection::vec(prop::collection::vec(-5.0f64..0.0, 4), 1..12),
        ) {
            let mut fwd = uniform_prior(4);
            for l in &lls {
                fwd = update_with_log_likelihoods(&fwd, l).unwrap().belief;
            }
            let mut rev = uniform_prior(4);
            for l in lls.iter().rev() {
                rev = update_with_log_likelihoods(&rev, l).unwrap().belief;
            }
            for (x, y) in fwd.probs().iter().zip(rev.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn updates_preserve_normalisation(
            prior in prop::collection::vec(0.01f64..1.0, 6),
            ll in prop::collection::vec(-50.0f64..0.0, 6),
        ) {
            let p = BeliefVector::from_probs(&prior);
            let post = update_with_log_likelihoods(&p, &ll).unwrap().belief;
            prop_assert!(post.is_normalized());
            prop_assert!(log_sum_exp(post.log_weights()).abs() < 1e-9);
            prop_assert!(post.log_weights().iter().all(|l| l.is_finite()));
        }
    }
}
