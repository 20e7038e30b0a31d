//! Parameter sets, per-node likelihood models and the KL-divergence
//! quantities derived from them.

mod family;
mod instance;
mod separation;

pub use family::{LabelDist, LabelFamily, Link};
pub use instance::{InstanceDist, InstanceSpace};
pub use separation::{
    ambiguity_sets, separation_table, verify_r_covering, AmbiguitySets, CoveringReport, SeparationTable, TIE_TOLERANCE,
};

use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter set needs at least 2 points, got {0}")]
    TooFewParameters(usize),
    #[error("parameter {index} has dimension {found}, expected {expected}")]
    RaggedParameters { index: usize, expected: usize, found: usize },
    #[error("parameters {a} and {b} coincide")]
    DuplicateParameter { a: usize, b: usize },
    #[error("parameter {0} has a non-finite coordinate")]
    NonFiniteParameter(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("success probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid label family: {0}")]
    InvalidFamily(String),
    #[error("invalid instance distribution: {0}")]
    InvalidInstances(String),
    #[error("KL divergence is unbounded at node {node}: the likelihood vanishes where the true label law has mass")]
    UnboundedKl { node: usize },
    #[error("no parameter is globally learnable: the per-node optimal sets have empty intersection")]
    NotGloballyLearnable,
    #[error("model list has {found} entries, expected {expected}")]
    ModelCount { expected: usize, found: usize },
}

/// Finite parameter set `Θ`; each point keeps its index for the lifetime of
/// the set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    points: Vec<Vec<f64>>,
}

impl ParameterSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::TooFewParameters(points.len()));
        }
        let d = points[0].len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(ModelError::RaggedParameters { index, expected: d, found: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteParameter(index));
            }
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                let close = points[a].iter().zip(&points[b]).all(|(x, y)| (x - y).abs() <= 1e-12);
                if close {
                    return Err(ModelError::DuplicateParameter { a, b });
                }
            }
        }
        Ok(Self { points })
    }

    /// Regular grid with `counts[m]` points on `[low[m], high[m]]` per axis,
    /// enumerated with the last axis varying fastest.
    pub fn grid(low: &[f64], high: &[f64], counts: &[usize]) -> Result<Self, ModelError> {
        let mut points = vec![Vec::new()];
        for ((&lo, &hi), &c) in low.iter().zip(high).zip(counts) {
            let axis: Vec<f64> =
                if c == 1 { vec![lo] } else { (0..c).map(|k| lo + (hi - lo) * k as f64 / (c - 1) as f64).collect() };
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut p = p.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Reorders points: index `k` of the result is index `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { points: perm.iter().map(|&k| self.points[k].clone()).collect() }
    }
}

/// A Monte Carlo (or exact) expectation with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Weighted mean and standard error; the standard error is zero when the
    /// weights describe an exact finite support.
    pub(crate) fn from_weighted(values: &[f64], weights: &[f64], exact: bool) -> Self {
        let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
        if exact || values.len() < 2 {
            return Self { mean, std_err: 0.0 };
        }
        let n = values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_err: (var / n).sqrt() }
    }
}

/// Node `i`'s local model: instance law `P_i`, likelihood family `l_i` and
/// the true label law `f_i(·|x) = family(·; truth, x)`.
///
/// With `truth` in `Θ` the node is realizable; otherwise the model is
/// misspecified relative to `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    pub node_id: usize,
    pub instances: InstanceSpace,
    pub family: LabelFamily,
    pub truth: Vec<f64>,
}

impl LikelihoodModel {
    pub fn new(
        node_id: usize,
        instances: InstanceSpace,
        family: LabelFamily,
        truth: Vec<f64>,
    ) -> Result<Self, ModelError> {
        instances.validate()?;
        family.validate()?;
        let expected = family.parameter_dim(instances.dim());
        if truth.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, found: truth.len() });
        }
        let model = Self { node_id, instances, family, truth };
        for x in model.instances.extreme_points() {
            model.family.dist(&model.truth, &x)?;
        }
        Ok(model)
    }

    pub fn parameter_dim(&self) -> usize {
        self.family.parameter_dim(self.instances.dim())
    }

    pub fn label_dist(&self, theta: &[f64], x: &[f64]) -> Result<LabelDist, ModelError> {
        self.family.dist(theta, x)
    }

    pub fn truth_dist(&self, x: &[f64]) -> Result<LabelDist, ModelError> {
        self.family.dist(&self.truth, x)
    }

    pub fn log_likelihood(&self, y: f64, theta: &[f64], x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.label_dist(theta, x)?.log_pdf(y))
    }

    pub fn sample_instance<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.instances.sample(rng)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64, ModelError> {
        Ok(self.truth_dist(x)?.sample(rng))
    }

    /// One `(x, y)` draw: `x ~ P_i`, then `y ~ f_i(·|x)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, f64), ModelError> {
        let x = self.sample_instance(rng);
        let y = self.sample_label(&x, rng)?;
        Ok((x, y))
    }

    /// Bounds `(α, L)` with `α <= l(y; θ, x) <= L` over every `θ ∈ Θ`, label
    /// and instance; `None` for families with unbounded likelihoods.
    pub fn likelihood_bounds(&self, theta: &ParameterSet) -> Result<Option<(f64, f64)>, ModelError> {
        if !self.family.is_bounded() {
            return Ok(None);
        }
        let exact = self.instances.has_finite_support();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut labels = 2;
        for x in self.instances.extreme_points() {
            for p in theta.points() {
                let d = self.label_dist(p, &x)?;
                if let LabelDist::Categorical(ref probs) = d {
                    labels = probs.len();
                }
                if let Some((a, b)) = d.mass_range() {
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
        }
        // Off a finite support the largest mass may sit inside the hull;
        // every other label keeps at least `lo`.
        if !exact {
            hi = 1.0 - (labels - 1) as f64 * lo;
        }
        Ok(Some((lo, hi)))
    }

    /// Weighted instances for expectations over `P_i`, drawn from the
    /// node's own keyed stream.
    pub fn expectation_points(&self, mc_samples: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = rng::stream(&[seed, 0xE7, self.node_id as u64]);
        self.instances.expectation_points(mc_samples.max(1), &mut rng)
    }

    fn kl_values(
        &self,
        points: &[(Vec<f64>, f64)],
        kl: impl Fn(&[f64]) -> Result<f64, ModelError>,
    ) -> Result<Vec<f64>, ModelError> {
        points
            .iter()
            .map(|(x, _)| {
                let v = kl(x)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ModelError::UnboundedKl { node: self.node_id })
                }
            })
            .collect()
    }

    /// Per-point `D_KL(f_i(·|x) ‖ l_i(·; θ, x))` over prepared instances.
    pub(crate) fn kl_to_truth_values(&self, theta: &[f64], points: &[(Vec<f64>, f64)]) -> Result<Vec<f64>, ModelError> {
        self.kl_values(points, |x| Ok(self.truth_dist(x)?.kl(&self.label_dist(theta, x)?)))
    }

    /// Per-point `D_KL(l_i(·; a, x) ‖ l_i(·; b, x))` over prepared instances.
    pub(crate) fn kl_between_values(
        &self,
        a: &[f64],
        b: &[f64],
        points: &[(Vec<f64>, f64)],
    ) -> Result<Vec<f64>, ModelError> {
        self.kl_values(points, |x| Ok(self.label_dist(a, x)?.kl(&self.label_dist(b, x)?)))
    }
}

/// `E_{P_i}[D_KL(f_i(·|X) ‖ l_i(·; θ, X))]`.
///
/// Exact for finite instance supports; otherwise a Monte Carlo average of
/// the closed-form conditional KL over `mc_samples` draws, deterministic in
/// `seed`.
pub fn expected_kl_to_truth(
    model: &LikelihoodModel,
    theta: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Estimate, ModelError> {
    let points = model.expectation_points(mc_samples, seed);
    let values = model.kl_to_truth_values(theta, &points)?;
    let weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
    Ok(Estimate::from_weighted(&values, &weights, model.instances.has_finite_support()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bernoulli_constant(truth: f64) -> LikelihoodModel {
        LikelihoodModel::new(
            0,
            InstanceSpace::discrete(vec![vec![1.0]], vec![1.0]),
            LabelFamily::Bernoulli { link: Link::Identity },
            vec![truth],
        )
        .unwrap()
    }

    #[test]
    fn parameter_set_contract() {
        assert!(matches!(ParameterSet::new(vec![vec![0.0]]), Err(ModelError::TooFewParameters(1))));
        assert!(matches!(
            ParameterSet::new(vec![vec![0.0], vec![0.0, 1.0]]),
            Err(ModelError::RaggedParameters { index: 1, .. })
        ));
        assert!(matches!(
            ParameterSet::new(vec![vec![0.5], vec![0.5 + 1e-13]]),
            Err(ModelError::DuplicateParameter { a: 0, b: 1 })
        ));
        let g = ParameterSet::grid(&[0.0, -1.0], &[1.0, 1.0], &[3, 2]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(1), &[0.0, 1.0]);
        assert_eq!(g.point(5), &[1.0, 1.0]);
    }

    #[test]
    fn realizable_kl_is_zero() {
        let m = bernoulli_constant(0.7);
        let e = expected_kl_to_truth(&m, &[0.7], 10, 1).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn bernoulli_kl_hand_value() {
        let m = bernoulli_constant(0.9);
        let e = expected_kl_to_truth(&m, &[0.5], 10, 1).unwrap();
        assert_abs_diff_eq!(e.mean, 0.368_064_207_168_497_1, epsilon = 1e-12);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn unbounded_kl_reported() {
        let m = bernoulli_constant(0.5);
        assert_eq!(expected_kl_to_truth(&m, &[1.0], 10, 1).unwrap_err(), ModelError::UnboundedKl { node: 0 });
    }

    #[test]
    fn type_one_regression_node_cannot_see_second_coordinate() {
        let m = LikelihoodModel::new(
            1,
            InstanceSpace::uniform_box(vec![-1.0, 0.0], vec![1.0, 0.0]),
            LabelFamily::LinearGaussian { noise_sd: 0.8 },
            vec![-0.3, 0.5, 0.8],
        )
        .unwrap();
        let hidden = expected_kl_to_truth(&m, &[-0.3, 0.5, -4.0], 500, 9).unwrap();
        assert_eq!(hidden.mean, 0.0);
        // Visible perturbation: E[(0.2 x1)²] / (2 * 0.64) = 0.04 / 3 / 1.28.
        let visible = expected_kl_to_truth(&m, &[-0.3, 0.7, 0.8], 20_000, 9).unwrap();
        let exact = 0.04 / 3.0 / 1.28;
        assert!((visible.mean - exact).abs() < 4.0 * visible.std_err + 1e-12);
    }

    #[test]
    fn likelihood_bounds_of_logistic_box() {
        let m = LikelihoodModel::new(
            0,
            InstanceSpace::uniform_box(vec![-1.0], vec![1.0]),
            LabelFamily::Bernoulli { link: Link::Logistic },
            vec![0.0],
        )
        .unwrap();
        let theta = ParameterSet::new(vec![vec![-1.0], vec![2.0]]).unwrap();
        let (a, l) = m.likelihood_bounds(&theta).unwrap().unwrap();
        let s2 = 1.0 / (1.0 + (2.0f64).exp());
        assert_abs_diff_eq!(a, s2, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 1.0 - s2, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_family_has_no_bounds() {
        let m = LikelihoodModel::new(
            0,
            InstanceSpace::uniform_box(vec![-1.0], vec![1.0]),
            LabelFamily::LinearGaussian { noise_sd: 1.0 },
            vec![0.0, 1.0],
        )
        .unwrap();
        let theta = ParameterSet::new(vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.likelihood_bounds(&theta).unwrap(), None);
    }
}
