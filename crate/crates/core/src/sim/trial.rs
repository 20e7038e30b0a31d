use rayon::prelude::*;

use super::scenario::{Engine, Scenario, TestStats};
use super::{SimError, StepError};
use crate::beliefs::{self, BeliefVector};
use crate::gaussian::{self, GaussianBelief};
use crate::models::ParameterSet;
use crate::rng;

/// Node counts times parameter counts below this run a round sequentially.
const PARALLEL_ROUND_WORK: usize = 256;

/// One drawn `(x, y)` pair.
pub type Sample = (Vec<f64>, f64);

/// A node's estimate after a round.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEstimate {
    /// MAP index into `Θ`.
    Index(usize),
    /// Posterior mean.
    Mean(Vec<f64>),
}

/// A node's state after the consensus step of one round.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSnapshot {
    Discrete { estimate: usize, probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, sigma_diag: Vec<f64>, mse: Option<f64> },
}

/// Consensus message delivered to `to` in `round`, carrying the public
/// belief `from` produced in `payload_round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub round: usize,
    pub from: usize,
    pub to: usize,
    pub payload_round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub final_estimates: Vec<NodeEstimate>,
    /// Every node ends in `Θ*`; `None` when `Θ*` is not defined.
    pub success: Option<bool>,
    /// Last round with some node outside `Θ*` (0 if none).
    pub last_failure_round: Option<usize>,
    /// `per_round_mse[k][i]`: node `i`'s test MSE after round `k + 1`.
    pub per_round_mse: Option<Vec<Vec<f64>>>,
    /// `trajectory[k][i]`: node `i`'s state after round `k + 1`.
    pub trajectory: Option<Vec<Vec<NodeSnapshot>>>,
    /// `samples[k][i]`: the `(x, y)` node `i` drew in round `k + 1`.
    pub samples: Option<Vec<Vec<Sample>>>,
    pub messages: Option<Vec<Message>>,
    /// Times the log floor fired during normalisation.
    pub clamp_events: usize,
}

/// The draw of node `node` in round `round` (1-based) of trial `trial`.
pub(crate) fn draw(scenario: &Scenario, trial: usize, node: usize, round: usize) -> Result<Sample, SimError> {
    let mut r = rng::stream(&[scenario.master_seed, trial as u64, node as u64, round as u64]);
    scenario.models[node].sample(&mut r).map_err(|e| SimError::Step { round, node, source: StepError::Model(e) })
}

/// Per-trial precomputed context.
pub struct TrialContext<'a> {
    pub scenario: &'a Scenario,
    pub theta_star: Option<&'a [usize]>,
    pub test_stats: Option<&'a TestStats>,
}

struct Public<T> {
    round: usize,
    belief: T,
}

fn in_star(star: &[usize], k: usize) -> bool {
    star.binary_search(&k).is_ok()
}

fn map_nodes<T: Send, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>, SimError>
where
    F: Fn(usize) -> Result<T, SimError> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

pub(crate) fn run_trial_with(ctx: &TrialContext<'_>, trial: usize) -> Result<TrialResult, SimError> {
    match &ctx.scenario.engine {
        Engine::Discrete { theta } => run_discrete(ctx, theta, trial),
        Engine::Gaussian { prior } => run_gaussian(ctx, prior, trial),
    }
}

fn run_discrete(ctx: &TrialContext<'_>, theta: &ParameterSet, trial: usize) -> Result<TrialResult, SimError> {
    let sc = ctx.scenario;
    let n = sc.n_nodes();
    let rec = sc.record;
    let parallel = n * theta.len() >= PARALLEL_ROUND_WORK;
    let mut privates: Vec<BeliefVector> = vec![beliefs::uniform_prior(theta.len()); n];
    let mut trajectory = rec.trajectories.then(Vec::new);
    let mut samples = rec.samples.then(Vec::new);
    let mut messages = rec.messages.then(Vec::new);
    let mut clamp_events = 0;
    let mut last_failure = 0;
    let mut estimates = vec![0; n];

    for round in 1..=sc.n_rounds {
        // Local Bayesian step: private belief of round-1 -> public of round.
        let stepped = map_nodes(n, parallel, |i| {
            let (x, y) = draw(sc, trial, i, round)?;
            let up = beliefs::bayesian_update(&privates[i], &sc.models[i], theta, &x, y)
                .map_err(|e| SimError::Step { round, node: i, source: StepError::Belief(e) })?;
            Ok((Public { round, belief: up.belief }, up.clamped, (x, y)))
        })?;
        let mut publics = Vec::with_capacity(n);
        let mut drawn = Vec::with_capacity(n);
        for (p, clamped, xy) in stepped {
            clamp_events += clamped as usize;
            publics.push(p);
            drawn.push(xy);
        }
        if let Some(s) = samples.as_mut() {
            s.push(drawn);
        }

        // Barrier: every public of this round exists before any consensus.
        let merged = map_nodes(n, parallel, |i| {
            let inputs: Vec<(&BeliefVector, f64)> =
                sc.graph.in_neighbors(i).map(|(j, w)| (&publics[j].belief, w)).collect();
            beliefs::consensus_update(&inputs, true).map_err(|e| SimError::Step {
                round,
                node: i,
                source: StepError::Belief(e),
            })
        })?;
        if let Some(log) = messages.as_mut() {
            for i in 0..n {
                for (j, _) in sc.graph.in_neighbors(i) {
                    log.push(Message { round, from: j, to: i, payload_round: publics[j].round });
                }
            }
        }
        let mut snaps = trajectory.as_ref().map(|_| Vec::with_capacity(n));
        for (i, up) in merged.into_iter().enumerate() {
            clamp_events += up.clamped as usize;
            privates[i] = up.belief;
            estimates[i] = beliefs::map_estimate(&privates[i]);
            if let Some(s) = snaps.as_mut() {
                s.push(NodeSnapshot::Discrete { estimate: estimates[i], probs: privates[i].probs() });
            }
        }
        if let (Some(t), Some(s)) = (trajectory.as_mut(), snaps) {
            t.push(s);
        }
        if let Some(star) = ctx.theta_star {
            if !estimates.iter().all(|&k| in_star(star, k)) {
                last_failure = round;
            }
        }
    }

    let success = ctx.theta_star.map(|star| estimates.iter().all(|&k| in_star(star, k)));
    Ok(TrialResult {
        trial,
        final_estimates: estimates.into_iter().map(NodeEstimate::Index).collect(),
        success,
        last_failure_round: ctx.theta_star.map(|_| last_failure),
        per_round_mse: None,
        trajectory,
        samples,
        messages,
        clamp_events,
    })
}

fn gaussian_snapshot(b: &GaussianBelief, mse: Option<f64>) -> Result<NodeSnapshot, SimError> {
    let cov = b.covariance().map_err(|e| SimError::Invalid(e.to_string()))?;
    Ok(NodeSnapshot::Gaussian {
        mean: b.mean().iter().copied().collect(),
        sigma_diag: cov.diagonal().iter().copied().collect(),
        mse,
    })
}

fn run_gaussian(ctx: &TrialContext<'_>, prior: &GaussianBelief, trial: usize) -> Result<TrialResult, SimError> {
    let sc = ctx.scenario;
    let n = sc.n_nodes();
    let rec = sc.record;
    let noise_var = sc.noise_var().expect("validated gaussian scenario");
    let parallel = n * prior.dim() * prior.dim() >= PARALLEL_ROUND_WORK;
    let mut privates: Vec<GaussianBelief> = vec![prior.clone(); n];
    let mut trajectory = rec.trajectories.then(Vec::new);
    let mut samples = rec.samples.then(Vec::new);
    let mut messages = rec.messages.then(Vec::new);
    let mut per_round_mse = ctx.test_stats.map(|_| Vec::with_capacity(sc.n_rounds));

    for round in 1..=sc.n_rounds {
        let stepped =
            map_nodes(n, parallel, |i| {
                let (x, y) = draw(sc, trial, i, round)?;
                let b = gaussian::gaussian_bayes_update(&privates[i], &x, y, noise_var)
                    .map_err(|e| SimError::Step { round, node: i, source: StepError::Gaussian(e) })?;
                Ok((Public { round, belief: b }, (x, y)))
            })?;
        let (publics, drawn): (Vec<_>, Vec<_>) = stepped.into_iter().unzip();
        if let Some(s) = samples.as_mut() {
            s.push(drawn);
        }

        let merged = map_nodes(n, parallel, |i| {
            let inputs: Vec<(&GaussianBelief, f64)> =
                sc.graph.in_neighbors(i).map(|(j, w)| (&publics[j].belief, w)).collect();
            gaussian::gaussian_consensus(&inputs).map_err(|e| SimError::Step {
                round,
                node: i,
                source: StepError::Gaussian(e),
            })
        })?;
        if let Some(log) = messages.as_mut() {
            for i in 0..n {
                for (j, _) in sc.graph.in_neighbors(i) {
                    log.push(Message { round, from: j, to: i, payload_round: publics[j].round });
                }
            }
        }
        privates = merged;

        let mses: Option<Vec<f64>> = ctx.test_stats.map(|t| privates.iter().map(|b| t.mse(b.mean())).collect());
        if let Some(t) = trajectory.as_mut() {
            let snaps = privates
                .iter()
                .enumerate()
                .map(|(i, b)| gaussian_snapshot(b, mses.as_ref().map(|m| m[i])))
                .collect::<Result<Vec<_>, _>>()?;
            t.push(snaps);
        }
        if let (Some(acc), Some(m)) = (per_round_mse.as_mut(), mses) {
            acc.push(m);
        }
    }

    Ok(TrialResult {
        trial,
        final_estimates: privates.iter().map(|b| NodeEstimate::Mean(b.mean().iter().copied().collect())).collect(),
        success: None,
        last_failure_round: None,
        per_round_mse,
        trajectory,
        samples,
        messages,
        clamp_events: 0,
    })
}

/// One node receiving every node's sample of each round, in node order.
pub(crate) fn run_central(ctx: &TrialContext<'_>, trial: usize) -> Result<TrialResult, SimError> {
    let sc = ctx.scenario;
    let Engine::Gaussian { prior } = &sc.engine else {
        return Err(SimError::Invalid("central baseline needs the gaussian engine".into()));
    };
    let noise_var = sc.noise_var().expect("validated gaussian scenario");
    let mut belief = prior.clone();
    let mut trajectory = sc.record.trajectories.then(Vec::new);
    let mut per_round_mse = ctx.test_stats.map(|_| Vec::with_capacity(sc.n_rounds));
    for round in 1..=sc.n_rounds {
        for node in 0..sc.n_nodes() {
            let (x, y) = draw(sc, trial, node, round)?;
            belief = gaussian::gaussian_bayes_update(&belief, &x, y, noise_var).map_err(|e| SimError::Step {
                round,
                node,
                source: StepError::Gaussian(e),
            })?;
        }
        let mse = ctx.test_stats.map(|t| t.mse(belief.mean()));
        if let Some(t) = trajectory.as_mut() {
            t.push(vec![gaussian_snapshot(&belief, mse)?]);
        }
        if let (Some(acc), Some(m)) = (per_round_mse.as_mut(), mse) {
            acc.push(vec![m]);
        }
    }
    Ok(TrialResult {
        trial,
        final_estimates: vec![NodeEstimate::Mean(belief.mean().iter().copied().collect())],
        success: None,
        last_failure_round: None,
        per_round_mse,
        trajectory,
        samples: None,
        messages: None,
        clamp_events: 0,
    })
}
