//! Synchronous round-based simulation of the peer-to-peer learning loop.
//!
//! Each round every node draws one sample from its own keyed stream, runs a
//! local Bayesian step to form its public belief, and after a full-round
//! barrier merges its in-neighbours' public beliefs into its private belief.
//! Results are a pure function of the scenario and seed, independent of how
//! many worker threads run them.

mod metrics;
mod scenario;
mod trial;

pub use metrics::{write_metrics_csv, write_metrics_json, MetricsFormat};
pub use scenario::{Engine, RecordOptions, Scenario, TestSetSpec, TestStats};
pub use trial::{Message, NodeEstimate, NodeSnapshot, Sample, TrialResult};

use rayon::prelude::*;
use thiserror::Error;

use crate::beliefs::BeliefError;
use crate::gaussian::GaussianError;
use crate::graph::GraphError;
use crate::models::ModelError;
use crate::theory::{self, TheoryError};
use trial::TrialContext;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("round {round}, node {node}: {source}")]
    Step {
        round: usize,
        node: usize,
        #[source]
        source: StepError,
    },
}

/// A scenario with its per-experiment quantities (`Θ*`, test statistics)
/// computed once.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    theta_star: Option<Vec<usize>>,
    test_stats: Option<TestStats>,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        Ok(Self { scenario, theta_star: scenario.theta_star()?, test_stats: scenario.test_stats() })
    }

    pub fn theta_star(&self) -> Option<&[usize]> {
        self.theta_star.as_deref()
    }

    fn ctx(&self) -> TrialContext<'_> {
        TrialContext {
            scenario: self.scenario,
            theta_star: self.theta_star.as_deref(),
            test_stats: self.test_stats.as_ref(),
        }
    }

    pub fn run_trial(&self, trial: usize) -> Result<TrialResult, SimError> {
        trial::run_trial_with(&self.ctx(), trial)
    }

    pub fn central_baseline(&self, trial: usize) -> Result<TrialResult, SimError> {
        trial::run_central(&self.ctx(), trial)
    }

    /// Runs every trial (in parallel) and aggregates.
    pub fn run_experiment(&self) -> Result<ExperimentReport, SimError> {
        let trials: Vec<TrialResult> =
            (0..self.scenario.trials).into_par_iter().map(|t| self.run_trial(t)).collect::<Result<_, _>>()?;
        let theorem_n = match (&self.scenario.engine, self.scenario.delta) {
            (Engine::Discrete { .. }, Some(_)) if self.scenario.graph.is_irreducible_aperiodic() => {
                match self.scenario.bound_inputs() {
                    Ok((inputs, _)) => Some(theory::sample_complexity(&inputs)?),
                    Err(SimError::Model(ModelError::NotGloballyLearnable)) => None,
                    Err(SimError::Invalid(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        Ok(ExperimentReport::aggregate(trials, theorem_n))
    }

    /// Central baseline for every trial, in parallel.
    pub fn run_baseline(&self) -> Result<Vec<TrialResult>, SimError> {
        (0..self.scenario.trials).into_par_iter().map(|t| self.central_baseline(t)).collect()
    }
}

/// Runs a single trial of `scenario`.
pub fn run_trial(scenario: &Scenario, trial: usize) -> Result<TrialResult, SimError> {
    Simulator::new(scenario)?.run_trial(trial)
}

pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentReport, SimError> {
    Simulator::new(scenario)?.run_experiment()
}

pub fn central_baseline(scenario: &Scenario, trial: usize) -> Result<TrialResult, SimError> {
    Simulator::new(scenario)?.central_baseline(trial)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool").install(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub trials: Vec<TrialResult>,
    /// Fraction of trials where some node ended outside `Θ*`.
    pub empirical_error: Option<f64>,
    /// `mean_mse[k][i]`: test MSE of node `i` after round `k + 1`, averaged
    /// over trials.
    pub mean_mse: Option<Vec<Vec<f64>>>,
    /// Sample-complexity bound for the scenario, when defined.
    pub theorem_n: Option<u64>,
    /// Smallest round from which every trial stayed in `Θ*`.
    pub rounds_to_all_success: Option<usize>,
    pub clamp_events: usize,
}

impl ExperimentReport {
    pub fn aggregate(trials: Vec<TrialResult>, theorem_n: Option<u64>) -> Self {
        let count = trials.len() as f64;
        let empirical_error = trials
            .iter()
            .map(|t| t.success)
            .collect::<Option<Vec<bool>>>()
            .map(|s| s.iter().filter(|ok| !**ok).count() as f64 / count);
        let mean_mse = trials.iter().map(|t| t.per_round_mse.as_ref()).collect::<Option<Vec<_>>>().map(|curves| {
            let mut acc = curves[0].clone();
            for c in &curves[1..] {
                for (row, other) in acc.iter_mut().zip(c.iter()) {
                    for (a, b) in row.iter_mut().zip(other) {
                        *a += b;
                    }
                }
            }
            for row in acc.iter_mut() {
                for a in row.iter_mut() {
                    *a /= count;
                }
            }
            acc
        });
        let rounds_to_all_success =
            trials.iter().map(|t| t.success.zip(t.last_failure_round)).collect::<Option<Vec<_>>>().and_then(|v| {
                v.iter().all(|(ok, _)| *ok).then(|| v.iter().map(|(_, last)| last + 1).max().unwrap_or(1))
            });
        let clamp_events = trials.iter().map(|t| t.clamp_events).sum();
        Self { trials, empirical_error, mean_mse, theorem_n, rounds_to_all_success, clamp_events }
    }

    /// Per-node final MSE averaged over trials.
    pub fn final_mse(&self) -> Option<&[f64]> {
        self.mean_mse.as_ref().and_then(|m| m.last()).map(Vec::as_slice)
    }
}
