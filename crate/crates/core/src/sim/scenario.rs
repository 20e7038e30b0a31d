use nalgebra::{DMatrix, DVector};

use super::SimError;
use crate::gaussian::{augment, GaussianBelief};
use crate::graph::{self, WeightMatrix};
use crate::models::{ambiguity_sets, separation_table, InstanceSpace, LabelFamily, LikelihoodModel, ParameterSet};
use crate::rng;
use crate::theory::BoundInputs;

/// Which belief representation the nodes run.
#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    /// Beliefs over a finite parameter set, uniform prior.
    Discrete { theta: ParameterSet },
    /// Conjugate Gaussian beliefs over `θ ∈ R^{d+1}`; every node must use
    /// the linear-Gaussian family.
    Gaussian { prior: GaussianBelief },
}

/// Where regression test points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSetSpec {
    /// `size` instances drawn from `instances`; MSE is the expected squared
    /// error under the label noise of the true parameter `truth`.
    Generated { instances: InstanceSpace, size: usize, truth: Vec<f64> },
    /// Explicit `(x, y)` pairs; MSE is the plain empirical mean.
    Points { points: Vec<(Vec<f64>, f64)> },
}

/// Sufficient statistics of a test set for `MSE(μ)`:
/// `μᵀ S μ - 2 μᵀ t + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestStats {
    pub size: usize,
    second_moment: DMatrix<f64>,
    cross: DVector<f64>,
    label_sq: f64,
}

impl TestStats {
    pub fn mse(&self, mean: &DVector<f64>) -> f64 {
        let quad = (mean.transpose() * &self.second_moment * mean)[(0, 0)];
        quad - 2.0 * mean.dot(&self.cross) + self.label_sq
    }
}

/// What a trial keeps besides its final estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordOptions {
    /// Per-round belief snapshots for every node.
    pub trajectories: bool,
    /// Every `(x, y)` sample drawn.
    pub samples: bool,
    /// Every consensus message with the round of the belief it carried.
    pub messages: bool,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: WeightMatrix,
    pub engine: Engine,
    pub models: Vec<LikelihoodModel>,
    pub n_rounds: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub test_set: Option<TestSetSpec>,
    /// Monte Carlo draws for expectations over instance laws.
    pub mc_samples: usize,
    /// Confidence for the sample-complexity bound.
    pub delta: Option<f64>,
    /// Replaces `|ln(L/α)|`, required when likelihoods are unbounded.
    pub c_override: Option<f64>,
    pub record: RecordOptions,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.n_nodes();
        if self.models.len() != n {
            return Err(SimError::Invalid(format!("{} node models for a {n}-node graph", self.models.len())));
        }
        if self.n_rounds == 0 {
            return Err(SimError::Invalid("n_rounds must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(SimError::Invalid("trials must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(SimError::Invalid("mc_samples must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(SimError::Invalid(format!("delta {d} outside (0, 1)")));
            }
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.node_id != i {
                return Err(SimError::Invalid(format!("model {i} carries node id {}", m.node_id)));
            }
        }
        match &self.engine {
            Engine::Discrete { theta } => {
                for m in &self.models {
                    if m.parameter_dim() != theta.dim() {
                        return Err(SimError::Invalid(format!(
                            "node {} expects parameters of dimension {}, parameter set has {}",
                            m.node_id,
                            m.parameter_dim(),
                            theta.dim()
                        )));
                    }
                }
            }
            Engine::Gaussian { prior } => {
                for m in &self.models {
                    if !matches!(m.family, LabelFamily::LinearGaussian { .. }) {
                        return Err(SimError::Invalid(format!(
                            "gaussian engine needs linear_gaussian labels at node {}",
                            m.node_id
                        )));
                    }
                    if m.parameter_dim() != prior.dim() {
                        return Err(SimError::Invalid(format!(
                            "node {} expects parameters of dimension {}, prior has {}",
                            m.node_id,
                            m.parameter_dim(),
                            prior.dim()
                        )));
                    }
                }
            }
        }
        if let Some(TestSetSpec::Generated { instances, size, truth }) = &self.test_set {
            instances.validate()?;
            if *size == 0 {
                return Err(SimError::Invalid("test set size must be at least 1".into()));
            }
            if truth.len() != instances.dim() + 1 {
                return Err(SimError::Invalid("test set truth must have instance dimension + 1".into()));
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn noise_var(&self) -> Option<f64> {
        self.models.first().and_then(|m| m.family.noise_var())
    }

    /// Indices of `Θ*` for the discrete engine.
    pub fn theta_star(&self) -> Result<Option<Vec<usize>>, SimError> {
        match &self.engine {
            Engine::Discrete { theta } => {
                let sets = ambiguity_sets(&self.models, theta, self.mc_samples, self.master_seed)?;
                Ok(Some(sets.theta_star))
            }
            Engine::Gaussian { .. } => Ok(None),
        }
    }

    /// Test statistics for MSE evaluation, if a test set and a regression
    /// engine are configured.
    pub fn test_stats(&self) -> Option<TestStats> {
        let test_spec = self.test_set.as_ref()?;
        let noise_var = self.noise_var()?;
        let (points, labels): (Vec<Vec<f64>>, Option<Vec<f64>>) = match test_spec {
            TestSetSpec::Generated { instances, size, .. } => {
                let mut r = rng::stream(&[self.master_seed, 0x7E57]);
                ((0..*size).map(|_| instances.sample(&mut r)).collect(), None)
            }
            TestSetSpec::Points { points } => {
                (points.iter().map(|(x, _)| x.clone()).collect(), Some(points.iter().map(|(_, y)| *y).collect()))
            }
        };
        let size = points.len();
        let d = points.first().map_or(0, Vec::len) + 1;
        let mut s = DMatrix::zeros(d, d);
        for x in &points {
            let xt = augment(x);
            s += &xt * xt.transpose();
        }
        s /= size as f64;
        let (cross, label_sq) = match (test_spec, labels) {
            (TestSetSpec::Generated { truth, .. }, _) => {
                let t = DVector::from_column_slice(truth);
                let st = &s * &t;
                let sq = t.dot(&st) + noise_var;
                (st, sq)
            }
            (_, Some(ys)) => {
                let mut cross = DVector::zeros(d);
                for (x, y) in points.iter().zip(&ys) {
                    cross += augment(x) * *y;
                }
                cross /= size as f64;
                (cross, ys.iter().map(|y| y * y).sum::<f64>() / size as f64)
            }
            (TestSetSpec::Points { .. }, None) => unreachable!(),
        };
        Some(TestStats { size, second_moment: s, cross, label_sq })
    }

    /// Assembles the sample-complexity inputs from the scenario.
    ///
    /// Returns the inputs and whether `C` came from an override for
    /// likelihoods without bounds.
    pub fn bound_inputs(&self) -> Result<(BoundInputs, bool), SimError> {
        let Engine::Discrete { theta } = &self.engine else {
            return Err(SimError::Invalid("bound needs a discrete parameter set".into()));
        };
        let delta = self.delta.ok_or_else(|| SimError::Invalid("bound needs delta".into()))?;
        let spectral = graph::spectral_gap(&self.graph)?;
        let table = separation_table(&self.models, theta, &spectral.stationary, self.mc_samples, self.master_seed)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut bounded = true;
        for m in &self.models {
            match m.likelihood_bounds(theta)? {
                Some((a, l)) => {
                    lo = lo.min(a);
                    hi = hi.max(l);
                }
                None => bounded = false,
            }
        }
        let (c, overridden) = match (self.c_override, bounded) {
            (Some(c), b) => (c, !b),
            (None, true) => ((hi / lo).ln().abs(), false),
            (None, false) => {
                return Err(SimError::Invalid(
                    "likelihoods are unbounded; supply c_override to evaluate the bound".into(),
                ))
            }
        };
        Ok((
            BoundInputs {
                n_nodes: self.n_nodes(),
                n_params: theta.len(),
                delta,
                c,
                k_theta: table.k_theta,
                lambda_max: spectral.lambda_max,
            },
            overridden,
        ))
    }
}
