//! Peer-to-peer Bayesian federated learning over directed graphs.
//!
//! Nodes hold beliefs over a parameter set, update them with local Bayesian
//! inference and merge their neighbours' beliefs by a weighted geometric
//! mean. Alongside the learning loop the crate computes the quantities that
//! govern it: stationary distribution and spectral gap of the confidence
//! matrix, KL separation of the parameter set, the sample-complexity bound
//! and the risk bound.
//!
//! * [`graph`]: confidence matrices and their mixing quantities.
//! * [`models`]: parameter sets, likelihood families and KL separation.
//! * [`beliefs`]: discrete log-space beliefs, Bayes update and consensus.
//! * [`gaussian`]: conjugate-Gaussian specialisation for linear regression.
//! * [`theory`]: sample-complexity and risk bounds.
//! * [`sim`]: the synchronous round engine and metric output.

pub mod beliefs;
pub mod gaussian;
pub mod graph;
pub mod models;
pub mod rng;
pub mod sim;
pub mod theory;

pub use beliefs::{BeliefError, BeliefVector};
pub use gaussian::{GaussianBelief, GaussianError};
pub use graph::{GraphError, SpectralSummary, WeightMatrix};
pub use models::{LikelihoodModel, ModelError, ParameterSet, SeparationTable};
pub use sim::{ExperimentReport, Scenario, SimError, TrialResult};
pub use theory::{BoundInputs, TheoryError};
