use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use p2pfl::graph::{spectral_gap, verify_mixing_bound};
use p2pfl::models::ModelError;
use p2pfl::sim::{write_metrics_csv, write_metrics_json, Engine, Simulator};
use p2pfl::theory::{sample_complexity, TheoryError};
use p2pfl::{BoundInputs, ExperimentReport, SimError, TrialResult};

use crate::config::{self, ConfigDocument, KTheta, OutputFormat};
use crate::error::CliError;

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Reads `path`, applies `overrides` and validates the result.
pub fn load(path: &Path, overrides: &Overrides) -> Result<ConfigDocument, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc = config::from_json(&text)?;
    if let Some(s) = doc.scenario.as_mut() {
        if let Some(seed) = overrides.seed {
            s.master_seed = seed;
        }
        if let Some(t) = overrides.trials {
            s.trials = t;
        }
    }
    if let Some(out) = &overrides.out {
        doc.output.dir = out.clone();
    }
    if let Some(f) = overrides.format {
        doc.output.format = f;
    }
    doc.validate()?;
    Ok(doc)
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Model(ModelError::NotGloballyLearnable) => CliError::validation(
            "scenario",
            "not globally learnable: no parameter minimises every node's expected KL divergence \
             (global learnability assumption violated)",
        ),
        SimError::Invalid(msg) => CliError::validation("scenario", msg),
        SimError::Graph(g) => CliError::validation("scenario.graph.weights", g.to_string()),
        SimError::Theory(TheoryError::InvalidInputs { field, reason }) => {
            CliError::validation(format!("bound.{field}"), reason)
        }
        other => CliError::runtime(other.to_string()),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("cannot write {}: {e}", path.display()))
}

fn write_metrics(dir: &Path, stem: &str, format: OutputFormat, trials: &[TrialResult]) -> Result<PathBuf, CliError> {
    let path = dir.join(match format {
        OutputFormat::Csv => format!("{stem}.csv"),
        OutputFormat::Json => format!("{stem}.jsonl"),
    });
    let out = BufWriter::new(File::create(&path).map_err(io(&path))?);
    match format {
        OutputFormat::Csv => write_metrics_csv(out, trials),
        OutputFormat::Json => write_metrics_json(out, trials),
    }
    .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_messages(dir: &Path, trials: &[TrialResult]) -> Result<(), CliError> {
    let path = dir.join("messages.csv");
    let mut out = BufWriter::new(File::create(&path).map_err(io(&path))?);
    writeln!(out, "trial,round,from,to,payload_round").map_err(io(&path))?;
    for t in trials {
        for m in t.messages.iter().flatten() {
            writeln!(out, "{},{},{},{},{}", t.trial, m.round, m.from, m.to, m.payload_round).map_err(io(&path))?;
        }
    }
    out.flush().map_err(io(&path))
}

/// `run`: simulates every trial, writes metrics and `summary.json` into the
/// output directory and returns the summary.
pub fn cmd_run(doc: &ConfigDocument) -> Result<Value, CliError> {
    let start = Instant::now();
    let mut scenario = doc.scenario()?.build()?;
    scenario.record.trajectories = true;
    scenario.record.messages = doc.output.messages;
    let sim = Simulator::new(&scenario).map_err(sim_error)?;
    let report = sim.run_experiment().map_err(sim_error)?;
    let baseline = match scenario.engine {
        Engine::Gaussian { .. } => Some(ExperimentReport::aggregate(sim.run_baseline().map_err(sim_error)?, None)),
        Engine::Discrete { .. } => None,
    };

    let dir = &doc.output.dir;
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_metrics(dir, "metrics", doc.output.format, &report.trials)?;
    if let Some(b) = &baseline {
        write_metrics(dir, "baseline_metrics", doc.output.format, &b.trials)?;
    }
    if doc.output.messages {
        write_messages(dir, &report.trials)?;
    }
    let summary = json!({
        "engine": match scenario.engine { Engine::Discrete { .. } => "discrete", Engine::Gaussian { .. } => "gaussian" },
        "n_nodes": scenario.n_nodes(),
        "n_rounds": scenario.n_rounds,
        "trials": scenario.trials,
        "master_seed": scenario.master_seed,
        "theta_star": sim.theta_star(),
        "empirical_error": report.empirical_error,
        "theorem_n": report.theorem_n,
        "rounds_to_all_success": report.rounds_to_all_success,
        "final_mse": report.final_mse(),
        "baseline_final_mse": baseline.as_ref().and_then(|b| b.final_mse()).map(|m| m[0]),
        "clamp_events": report.clamp_events,
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n").map_err(io(&path))?;
    Ok(summary)
}

fn bound_json(inputs: &BoundInputs, n: u64, assumption_violated: bool) -> Value {
    json!({
        "n_nodes": inputs.n_nodes,
        "n_params": inputs.n_params,
        "delta": inputs.delta,
        "c": inputs.c,
        "k_theta": KTheta(inputs.k_theta),
        "lambda_max": inputs.lambda_max,
        "n": n,
        "assumption_violated": assumption_violated,
    })
}

/// `bound`: the sample-complexity bound, from explicit `bound_inputs` when
/// present, otherwise derived from the scenario.
pub fn cmd_bound(doc: &ConfigDocument) -> Result<Value, CliError> {
    let (inputs, overridden) = match &doc.bound_inputs {
        Some(b) => (b.to_inputs()?, false),
        None => doc.scenario()?.build()?.bound_inputs().map_err(sim_error)?,
    };
    let n = sample_complexity(&inputs).map_err(|e| match e {
        TheoryError::InvalidInputs { field, reason } => CliError::validation(format!("bound.{field}"), reason),
        other => CliError::runtime(other.to_string()),
    })?;
    Ok(bound_json(&inputs, n, overridden))
}

/// `check-graph`: full graph validation, stationary vector, `λ_max` and the
/// mixing report at the configured horizon.
pub fn cmd_check_graph(doc: &ConfigDocument) -> Result<Value, CliError> {
    let g = &doc.scenario()?.graph;
    let w = g.build_strict()?;
    let spectral = spectral_gap(&w).map_err(|e| CliError::runtime(e.to_string()))?;
    let report = verify_mixing_bound(&w, g.mixing_horizon).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(json!({
        "valid": true,
        "n_nodes": w.n_nodes(),
        "stationary": spectral.stationary,
        "lambda_max": spectral.lambda_max,
        "mixing_bound": spectral.mixing_bound,
        "mixing_report": {
            "horizon": report.horizon,
            "all_within_bound": report.all_within_bound(),
            "rows": report.rows,
        },
    }))
}
