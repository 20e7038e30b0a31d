//! Per-round metric serialisation.
//!
//! CSV columns, one row per `(trial, round, node)`:
//!
//! * discrete engine: `trial, round, node, estimate_index, b_0 .. b_{M-1}, mse`
//! * gaussian engine: `trial, round, node, mu_0 .. mu_d, sigma_0 .. sigma_d, mse`
//!
//! `b_k` are private belief probabilities and `sigma_k` the diagonal of the
//! posterior covariance. Rounds are 1-based, nodes and trials 0-based. Reals
//! are written with 12 significant digits.

use std::io::Write;

use serde_json::json;

use super::trial::{NodeSnapshot, TrialResult};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    /// One JSON object per line.
    Json,
}

fn fmt(v: f64) -> String {
    format!("{v:.11e}")
}

fn round12(v: f64) -> f64 {
    fmt(v).parse().unwrap_or(v)
}

fn header(first: &NodeSnapshot) -> Vec<String> {
    let mut h: Vec<String> = vec!["trial".into(), "round".into(), "node".into()];
    match first {
        NodeSnapshot::Discrete { probs, .. } => {
            h.push("estimate_index".into());
            h.extend((0..probs.len()).map(|k| format!("b_{k}")));
        }
        NodeSnapshot::Gaussian { mean, sigma_diag, .. } => {
            h.extend((0..mean.len()).map(|k| format!("mu_{k}")));
            h.extend((0..sigma_diag.len()).map(|k| format!("sigma_{k}")));
        }
    }
    h.push("mse".into());
    h
}

fn rows(trials: &[TrialResult]) -> Result<impl Iterator<Item = (usize, usize, usize, &NodeSnapshot)>, SimError> {
    for t in trials {
        if t.trajectory.is_none() {
            return Err(SimError::Invalid(format!("trial {} has no recorded trajectory", t.trial)));
        }
    }
    Ok(trials.iter().flat_map(|t| {
        t.trajectory.as_ref().into_iter().flat_map(move |traj| {
            traj.iter()
                .enumerate()
                .flat_map(move |(k, nodes)| nodes.iter().enumerate().map(move |(i, s)| (t.trial, k + 1, i, s)))
        })
    }))
}

fn io_err(e: impl std::fmt::Display) -> SimError {
    SimError::Invalid(format!("metrics write failed: {e}"))
}

pub fn write_metrics_csv<W: Write>(out: W, trials: &[TrialResult]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let mut it = rows(trials)?.peekable();
    let Some(&(_, _, _, first)) = it.peek() else {
        return w.flush().map_err(io_err);
    };
    w.write_record(header(first)).map_err(io_err)?;
    for (trial, round, node, snap) in it {
        let mut rec = vec![trial.to_string(), round.to_string(), node.to_string()];
        match snap {
            NodeSnapshot::Discrete { estimate, probs } => {
                rec.push(estimate.to_string());
                rec.extend(probs.iter().map(|p| fmt(*p)));
                rec.push(String::new());
            }
            NodeSnapshot::Gaussian { mean, sigma_diag, mse } => {
                rec.extend(mean.iter().map(|v| fmt(*v)));
                rec.extend(sigma_diag.iter().map(|v| fmt(*v)));
                rec.push(mse.map(fmt).unwrap_or_default());
            }
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_metrics_json<W: Write>(mut out: W, trials: &[TrialResult]) -> Result<(), SimError> {
    for (trial, round, node, snap) in rows(trials)? {
        let v = match snap {
            NodeSnapshot::Discrete { estimate, probs } => json!({
                "trial": trial, "round": round, "node": node,
                "estimate_index": estimate,
                "beliefs": probs.iter().map(|p| round12(*p)).collect::<Vec<_>>(),
            }),
            NodeSnapshot::Gaussian { mean, sigma_diag, mse } => json!({
                "trial": trial, "round": round, "node": node,
                "mu": mean.iter().map(|v| round12(*v)).collect::<Vec<_>>(),
                "sigma": sigma_diag.iter().map(|v| round12(*v)).collect::<Vec<_>>(),
                "mse": mse.map(round12),
            }),
        };
        writeln!(out, "{v}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
