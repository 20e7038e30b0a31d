//! JSON configuration documents.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "scenario": {
//!     "graph": { "weights": [[0.9, 0.1], [0.6, 0.4]] },
//!     "engine": { "kind": "discrete", "parameters": [[0.9], [0.5]] },
//!     "nodes": [ { "instances": { "dist": { ... } }, "family": { ... }, "truth": [0.9] }, ... ],
//!     "n_rounds": 100, "trials": 10, "master_seed": 0, "delta": 0.1
//!   },
//!   "output": { "dir": "out", "format": "csv" }
//! }
//! ```
//!
//! A document may instead (or also) carry `bound_inputs` for `bound`.

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use p2pfl::graph::{GraphError, WeightMatrix};
use p2pfl::models::{InstanceSpace, LabelFamily};
use p2pfl::sim::{Engine, RecordOptions, TestSetSpec};
use p2pfl::theory::TheoryError;
use p2pfl::{BoundInputs, GaussianBelief, LikelihoodModel, ParameterSet, Scenario};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_inputs: Option<BoundInputsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphConfig,
    pub engine: EngineConfig,
    pub nodes: Vec<NodeConfig>,
    pub n_rounds: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_set: Option<TestSetConfig>,
}

fn one() -> usize {
    1
}

fn default_mc() -> usize {
    1000
}

fn yes() -> bool {
    true
}

fn default_horizon() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub weights: Vec<Vec<f64>>,
    /// Reject graphs that are not irreducible and aperiodic. Turn off for
    /// non-cooperative runs such as an identity `W`.
    #[serde(default = "yes")]
    pub require_connected: bool,
    /// Horizon for the mixing report of `check-graph`.
    #[serde(default = "default_horizon")]
    pub mixing_horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineConfig {
    Discrete { parameters: Vec<Vec<f64>> },
    Gaussian { prior: PriorConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    pub covariance_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub instances: InstanceSpace,
    pub family: LabelFamily,
    /// Parameter of the true label law.
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSetConfig {
    Generated { instances: InstanceSpace, size: usize, truth: Vec<f64> },
    Points { points: Vec<TestPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputsConfig {
    pub n_nodes: usize,
    pub n_params: usize,
    pub delta: f64,
    pub c: f64,
    pub k_theta: KTheta,
    pub lambda_max: f64,
}

/// `K(Θ)`, written as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KTheta(pub f64);

impl Serialize for KTheta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for KTheta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = KTheta;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<KTheta, E> {
                Ok(KTheta(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<KTheta, E> {
                Ok(KTheta(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<KTheta, E> {
                Ok(KTheta(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<KTheta, E> {
                match v {
                    "inf" => Ok(KTheta(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl BoundInputsConfig {
    pub fn to_inputs(&self) -> Result<BoundInputs, CliError> {
        let inputs = BoundInputs {
            n_nodes: self.n_nodes,
            n_params: self.n_params,
            delta: self.delta,
            c: self.c,
            k_theta: self.k_theta.0,
            lambda_max: self.lambda_max,
        };
        inputs.validate().map_err(|e| match e {
            TheoryError::InvalidInputs { field, reason } => {
                CliError::validation(format!("bound_inputs.{field}"), reason)
            }
            other => CliError::validation("bound_inputs", other.to_string()),
        })?;
        Ok(inputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// Also write every consensus message to `messages.csv`.
    #[serde(default)]
    pub messages: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), format: OutputFormat::Csv, messages: false }
    }
}

/// Reads a document without semantic checks.
pub fn from_json(text: &str) -> Result<ConfigDocument, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ConfigDocument = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            CliError::Syntax { line: inner.line(), column: inner.column(), message: inner.to_string() }
        } else {
            let path = if path == "." { "<root>".to_string() } else { path };
            CliError::validation(path, strip_position(&inner.to_string()))
        }
    })?;
    de.end().map_err(|e| CliError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
    Ok(doc)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Parses and fully validates a document.
pub fn parse_config(text: &str) -> Result<ConfigDocument, CliError> {
    let doc = from_json(text)?;
    doc.validate()?;
    Ok(doc)
}

impl ConfigDocument {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::validation(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.scenario.is_none() && self.bound_inputs.is_none() {
            return Err(CliError::validation("<root>", "needs `scenario` or `bound_inputs`"));
        }
        if let Some(s) = &self.scenario {
            s.build()?;
        }
        if let Some(b) = &self.bound_inputs {
            b.to_inputs()?;
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn scenario(&self) -> Result<&ScenarioConfig, CliError> {
        self.scenario.as_ref().ok_or_else(|| CliError::validation("scenario", "missing"))
    }
}

fn graph_error(e: GraphError) -> CliError {
    match e {
        GraphError::NotStochastic { row, .. }
        | GraphError::InvalidEntry { row, .. }
        | GraphError::NotSquare { row, .. } => {
            CliError::validation(format!("scenario.graph.weights[{row}]"), e.to_string())
        }
        other => CliError::validation("scenario.graph.weights", other.to_string()),
    }
}

impl GraphConfig {
    /// Row-stochastic check, plus connectivity and aperiodicity when
    /// `require_connected`.
    pub fn build(&self) -> Result<WeightMatrix, CliError> {
        if self.require_connected {
            WeightMatrix::validate(&self.weights)
        } else {
            WeightMatrix::stochastic(&self.weights)
        }
        .map_err(graph_error)
    }

    /// Full check regardless of `require_connected`.
    pub fn build_strict(&self) -> Result<WeightMatrix, CliError> {
        GraphConfig { require_connected: true, ..self.clone() }.build()
    }
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, CliError> {
        let graph = self.graph.build()?;
        let n = graph.n_nodes();
        if self.nodes.len() != n {
            return Err(CliError::validation(
                "scenario.nodes",
                format!("{} nodes configured for a {n}-node graph", self.nodes.len()),
            ));
        }
        let engine = match &self.engine {
            EngineConfig::Discrete { parameters } => Engine::Discrete {
                theta: ParameterSet::new(parameters.clone())
                    .map_err(|e| CliError::validation("scenario.engine.parameters", e.to_string()))?,
            },
            EngineConfig::Gaussian { prior } => {
                if prior.mean.len() != prior.covariance_diag.len() {
                    return Err(CliError::validation(
                        "scenario.engine.prior.covariance_diag",
                        "length differs from the prior mean",
                    ));
                }
                Engine::Gaussian {
                    prior: GaussianBelief::diagonal(prior.mean.clone(), &prior.covariance_diag)
                        .map_err(|e| CliError::validation("scenario.engine.prior", e.to_string()))?,
                }
            }
        };
        let models = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                LikelihoodModel::new(i, node.instances.clone(), node.family.clone(), node.truth.clone())
                    .map_err(|e| CliError::validation(format!("scenario.nodes[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (field, v) in [("n_rounds", self.n_rounds), ("trials", self.trials), ("mc_samples", self.mc_samples)] {
            if v == 0 {
                return Err(CliError::validation(format!("scenario.{field}"), "must be at least 1"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(CliError::validation("scenario.delta", format!("{d} is outside (0, 1)")));
            }
        }
        if let Some(c) = self.c_override {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::validation("scenario.c_override", "must be positive and finite"));
            }
        }
        let test_set = self.test_set.as_ref().map(|t| match t {
            TestSetConfig::Generated { instances, size, truth } => {
                TestSetSpec::Generated { instances: instances.clone(), size: *size, truth: truth.clone() }
            }
            TestSetConfig::Points { points } => {
                TestSetSpec::Points { points: points.iter().map(|p| (p.x.clone(), p.y)).collect() }
            }
        });
        if let Some(TestSetSpec::Points { points }) = &test_set {
            let d = self.nodes.first().map_or(0, |n| n.instances.dim());
            if points.is_empty() || points.iter().any(|(x, y)| x.len() != d || !y.is_finite()) {
                return Err(CliError::validation(
                    "scenario.test_set.points",
                    format!("needs at least one point, each with {d} finite coordinates"),
                ));
            }
        }
        let scenario = Scenario {
            graph,
            engine,
            models,
            n_rounds: self.n_rounds,
            trials: self.trials,
            master_seed: self.master_seed,
            test_set,
            mc_samples: self.mc_samples,
            delta: self.delta,
            c_override: self.c_override,
            record: RecordOptions::default(),
        };
        scenario.validate().map_err(|e| CliError::validation("scenario", e.to_string()))?;
        Ok(scenario)
    }
}
