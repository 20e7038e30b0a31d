//! Directed communication graph and its row-stochastic confidence matrix.
//!
//! `W[i][j] > 0` means node `i` listens to node `j` (edge `j -> i`). The
//! matrix drives both the consensus step and every mixing quantity used by
//! the sample-complexity bound: stationary distribution, second-largest
//! eigenvalue modulus and the partial-sum mixing bound.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

const POWER_ITERATION_CAP: usize = 1_000_000;
const POWER_ITERATION_RESIDUAL: f64 = 1e-12;
const DIRECT_SOLVE_MAX_N: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("weight matrix is empty")]
    Empty,
    #[error("weight matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("entry ({row}, {col}) is {value}, expected a finite non-negative number")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("graph is not strongly connected: node {unreachable} cannot exchange information with node 0")]
    NotStronglyConnected { unreachable: usize },
    #[error("graph is periodic with period {period}")]
    Periodic { period: usize },
    #[error("stationary distribution did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),
}

/// A row-stochastic confidence matrix.
///
/// Construct with [`WeightMatrix::validate`] for the full strongly connected,
/// aperiodic contract, or with [`WeightMatrix::stochastic`] when only the
/// row-sum contract is needed (e.g. a non-cooperative identity network).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    weights: DMatrix<f64>,
    irreducible_aperiodic: bool,
}

impl WeightMatrix {
    /// Checks entries and row sums only.
    pub fn stochastic(raw: &[Vec<f64>]) -> Result<Self, GraphError> {
        let n = raw.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for (row, r) in raw.iter().enumerate() {
            if r.len() != n {
                return Err(GraphError::NotSquare { row, len: r.len(), expected: n });
            }
            for (col, &value) in r.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(GraphError::InvalidEntry { row, col, value });
                }
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(GraphError::NotStochastic { row, sum });
            }
        }
        let weights = DMatrix::from_fn(n, n, |i, j| raw[i][j]);
        let irreducible_aperiodic = strongly_connected(&weights).is_ok() && period(&weights) == 1;
        Ok(Self { weights, irreducible_aperiodic })
    }

    /// Full validation: stochastic rows, strongly connected, aperiodic.
    pub fn validate(raw: &[Vec<f64>]) -> Result<Self, GraphError> {
        let mut w = Self::stochastic(raw)?;
        strongly_connected(&w.weights)?;
        let p = period(&w.weights);
        if p != 1 {
            return Err(GraphError::Periodic { period: p });
        }
        w.irreducible_aperiodic = true;
        Ok(w)
    }

    pub fn identity(n: usize) -> Self {
        Self { weights: DMatrix::identity(n, n), irreducible_aperiodic: n == 1 }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// True when the matrix satisfies the strongly connected, aperiodic contract.
    pub fn is_irreducible_aperiodic(&self) -> bool {
        self.irreducible_aperiodic
    }

    /// In-neighbours of `i` (including `i` itself when it has a self-loop),
    /// paired with the confidence weight `W[i][j]`.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_nodes()).filter_map(move |j| {
            let w = self.weights[(i, j)];
            (w > 0.0).then_some((j, w))
        })
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes()).map(|i| self.weights.row(i).iter().copied().collect()).collect()
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n);
        Self {
            weights: DMatrix::from_fn(n, n, |i, j| self.weights[(perm[i], perm[j])]),
            irreducible_aperiodic: self.irreducible_aperiodic,
        }
    }
}

fn reachable_from_zero(adj: impl Fn(usize, usize) -> bool, n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for (v, s) in seen.iter_mut().enumerate() {
            if !*s && adj(u, v) {
                *s = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn strongly_connected(w: &DMatrix<f64>) -> Result<(), GraphError> {
    let n = w.nrows();
    // Information flows j -> i whenever W[i][j] > 0.
    let forward = reachable_from_zero(|u, v| w[(v, u)] > 0.0, n);
    let backward = reachable_from_zero(|u, v| w[(u, v)] > 0.0, n);
    match (0..n).find(|&k| !forward[k] || !backward[k]) {
        Some(unreachable) => Err(GraphError::NotStronglyConnected { unreachable }),
        None => Ok(()),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected positivity pattern: gcd over every edge
/// `u -> v` of `level[u] + 1 - level[v]`, with BFS levels from node 0.
fn period(w: &DMatrix<f64>) -> usize {
    let n = w.nrows();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if w[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..n {
        for v in 0..n {
            if w[(u, v)] > 0.0 && level[u] != usize::MAX && level[v] != usize::MAX {
                let diff = (level[u] + 1) as isize - level[v] as isize;
                g = gcd(g, diff.unsigned_abs());
            }
        }
    }
    g
}

/// Stationary distribution of a validated matrix.
///
/// Uses a direct linear solve for `N <= 64` and power iteration otherwise.
pub fn stationary_distribution(w: &WeightMatrix) -> Result<DVector<f64>, GraphError> {
    if w.n_nodes() <= DIRECT_SOLVE_MAX_N {
        if let Some(v) = stationary_direct(w) {
            return Ok(v);
        }
    }
    stationary_power_iteration(w)
}

/// Solves `(Wᵀ - I) v = 0` with the last equation replaced by `Σ v = 1`.
pub fn stationary_direct(w: &WeightMatrix) -> Option<DVector<f64>> {
    let n = w.n_nodes();
    let mut a = w.weights.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let v = a.lu().solve(&rhs)?;
    v.iter().all(|x| x.is_finite()).then_some(v)
}

/// Power iteration `v <- v W` from the uniform vector until the max-norm
/// change drops below 1e-12.
pub fn stationary_power_iteration(w: &WeightMatrix) -> Result<DVector<f64>, GraphError> {
    let n = w.n_nodes();
    let wt = w.weights.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITERATION_CAP {
        let mut next = &wt * &v;
        let s = next.sum();
        next /= s;
        let residual = (&next - &v).amax();
        v = next;
        if residual < POWER_ITERATION_RESIDUAL {
            return Ok(v);
        }
    }
    Err(GraphError::NoConvergence { iterations: POWER_ITERATION_CAP })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub stationary: Vec<f64>,
    /// Second-largest eigenvalue modulus.
    pub lambda_max: f64,
    /// `4 ln N / (1 - lambda_max)`.
    pub mixing_bound: f64,
}

/// Eigenvalue moduli of `W`, sorted descending.
pub fn eigenvalue_moduli(w: &WeightMatrix) -> Result<Vec<f64>, GraphError> {
    let eig = w.weights.clone().complex_eigenvalues();
    let mut moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    if moduli.iter().any(|m| !m.is_finite()) {
        return Err(GraphError::EigenFailure("non-finite eigenvalue".into()));
    }
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

pub fn spectral_gap(w: &WeightMatrix) -> Result<SpectralSummary, GraphError> {
    let stationary = stationary_distribution(w)?;
    let eig = w.weights.clone().complex_eigenvalues();
    // Drop the single eigenvalue closest to 1; the rest bound the mixing rate.
    let unit = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(k, _)| k)
        .ok_or_else(|| GraphError::EigenFailure("no eigenvalues".into()))?;
    if (eig[unit] - 1.0).norm() > 1e-6 {
        return Err(GraphError::EigenFailure(format!("no unit eigenvalue found (closest is {})", eig[unit])));
    }
    let lambda_max = eig.iter().enumerate().filter(|&(k, _)| k != unit).map(|(_, z)| z.norm()).fold(0.0_f64, f64::max);
    if !lambda_max.is_finite() {
        return Err(GraphError::EigenFailure("non-finite eigenvalue".into()));
    }
    let n = w.n_nodes() as f64;
    Ok(SpectralSummary {
        stationary: stationary.iter().copied().collect(),
        lambda_max,
        mixing_bound: 4.0 * n.ln() / (1.0 - lambda_max),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingRow {
    pub node: usize,
    pub partial_sum: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingReport {
    pub horizon: usize,
    pub mixing_bound: f64,
    pub rows: Vec<MixingRow>,
}

impl MixingReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound)
    }
}

/// Per-node partial sums `Σ_{k=1..horizon} Σ_j |W^k_ij - v_j|` against the
/// mixing bound.
pub fn verify_mixing_bound(w: &WeightMatrix, horizon: usize) -> Result<MixingReport, GraphError> {
    let summary = spectral_gap(w)?;
    let sums = mixing_partial_sums(w, &summary.stationary, horizon);
    let rows = sums
        .last()
        .map(|last| {
            last.iter()
                .enumerate()
                .map(|(node, &partial_sum)| MixingRow {
                    node,
                    partial_sum,
                    within_bound: partial_sum <= summary.mixing_bound,
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(MixingReport { horizon, mixing_bound: summary.mixing_bound, rows })
}

/// Cumulative partial sums for every horizon `1..=horizon`; entry `[h-1][i]`
/// holds node `i`'s sum up to `h`.
pub fn mixing_partial_sums(w: &WeightMatrix, stationary: &[f64], horizon: usize) -> Vec<Vec<f64>> {
    let n = w.n_nodes();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut acc = vec![0.0; n];
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        power = &power * &w.weights;
        for (i, a) in acc.iter_mut().enumerate() {
            *a += (0..n).map(|j| (power[(i, j)] - stationary[j]).abs()).sum::<f64>();
        }
        out.push(acc.clone());
    }
    out
}
