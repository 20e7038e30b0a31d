use rayon::prelude::*;

use super::{Estimate, LikelihoodModel, ModelError, ParameterSet};

/// Absolute tolerance on expected-KL values when forming argmin sets.
pub const TIE_TOLERANCE: f64 = 1e-6;

/// Per-node optimal sets `Θ̄_i` and their intersection `Θ*`.
#[derive(Debug, Clone)]
pub struct AmbiguitySets {
    /// `expected_kl[i][θ] = E_{P_i}[D_KL(f_i ‖ l_i(·; θ))]`.
    pub expected_kl: Vec<Vec<Estimate>>,
    pub theta_bar: Vec<Vec<usize>>,
    pub theta_star: Vec<usize>,
    // Per-instance KL values, kept for standard errors of differences.
    values: Vec<Vec<Vec<f64>>>,
    exact: Vec<bool>,
}

impl AmbiguitySets {
    pub fn is_globally_learnable(&self) -> bool {
        !self.theta_star.is_empty()
    }

    pub fn contains_star(&self, index: usize) -> bool {
        self.theta_star.binary_search(&index).is_ok()
    }
}

pub fn ambiguity_sets(
    models: &[LikelihoodModel],
    theta: &ParameterSet,
    mc_samples: usize,
    seed: u64,
) -> Result<AmbiguitySets, ModelError> {
    for m in models {
        if m.parameter_dim() != theta.dim() {
            return Err(ModelError::DimensionMismatch { expected: m.parameter_dim(), found: theta.dim() });
        }
    }
    let per_node: Vec<(Vec<Vec<f64>>, Vec<Estimate>)> = models
        .par_iter()
        .map(|m| {
            let points = m.expectation_points(mc_samples, seed);
            let weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
            let exact = m.instances.has_finite_support();
            let mut values = Vec::with_capacity(theta.len());
            let mut estimates = Vec::with_capacity(theta.len());
            for p in theta.points() {
                let v = m.kl_to_truth_values(p, &points)?;
                estimates.push(Estimate::from_weighted(&v, &weights, exact));
                values.push(v);
            }
            Ok((values, estimates))
        })
        .collect::<Result<_, ModelError>>()?;

    let mut values = Vec::with_capacity(models.len());
    let mut expected_kl = Vec::with_capacity(models.len());
    for (v, e) in per_node {
        values.push(v);
        expected_kl.push(e);
    }
    let theta_bar: Vec<Vec<usize>> = expected_kl
        .iter()
        .map(|row| {
            let min = row.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
            (0..row.len()).filter(|&k| row[k].mean <= min + TIE_TOLERANCE).collect()
        })
        .collect();
    let theta_star = (0..theta.len()).filter(|k| theta_bar.iter().all(|set| set.contains(k))).collect();
    let exact = models.iter().map(|m| m.instances.has_finite_support()).collect();
    Ok(AmbiguitySets { expected_kl, theta_bar, theta_star, values, exact })
}

/// Network separation quantities for the sample-complexity bound.
#[derive(Debug, Clone)]
pub struct SeparationTable {
    /// `i_matrix[j][θ][ψ] = I_j(θ, ψ)`.
    pub i_matrix: Vec<Vec<Vec<f64>>>,
    pub theta_bar: Vec<Vec<usize>>,
    pub theta_star: Vec<usize>,
    /// `K(Θ)`; `+∞` when every parameter is globally learnable.
    pub k_theta: f64,
    /// Monte Carlo standard error of `k_theta` (zero when exact).
    pub k_theta_std_err: f64,
    /// Minimising `(θ, ψ)` pair of `K(Θ)`.
    pub k_argmin: Option<(usize, usize)>,
}

/// Builds `I_j(θ, ψ)`, `Θ̄_j`, `Θ*` and `K(Θ)` weighted by `stationary`.
///
/// All parameters of a node share the same instance draws, so `I_j` is
/// exactly antisymmetric.
pub fn separation_table(
    models: &[LikelihoodModel],
    theta: &ParameterSet,
    stationary: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<SeparationTable, ModelError> {
    if models.len() != stationary.len() {
        return Err(ModelError::ModelCount { expected: stationary.len(), found: models.len() });
    }
    let sets = ambiguity_sets(models, theta, mc_samples, seed)?;
    if !sets.is_globally_learnable() {
        return Err(ModelError::NotGloballyLearnable);
    }
    let m = theta.len();
    let i_matrix: Vec<Vec<Vec<f64>>> = sets
        .expected_kl
        .iter()
        .map(|row| (0..m).map(|a| (0..m).map(|b| row[b].mean - row[a].mean).collect()).collect())
        .collect();

    let mut k_theta = f64::INFINITY;
    let mut k_argmin = None;
    for &a in &sets.theta_star {
        for b in (0..m).filter(|b| !sets.contains_star(*b)) {
            let s: f64 = stationary.iter().zip(&i_matrix).map(|(v, i)| v * i[a][b]).sum();
            if s < k_theta {
                k_theta = s;
                k_argmin = Some((a, b));
            }
        }
    }

    let k_theta_std_err = match k_argmin {
        Some((a, b)) => stationary
            .iter()
            .enumerate()
            .filter(|&(j, _)| !sets.exact[j])
            .map(|(j, v)| {
                let diff: Vec<f64> = sets.values[j][b].iter().zip(&sets.values[j][a]).map(|(x, y)| x - y).collect();
                let n = diff.len() as f64;
                if n < 2.0 {
                    return 0.0;
                }
                let mean = diff.iter().sum::<f64>() / n;
                let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
                v * v * var / n
            })
            .sum::<f64>()
            .sqrt(),
        None => 0.0,
    };

    Ok(SeparationTable {
        i_matrix,
        theta_bar: sets.theta_bar,
        theta_star: sets.theta_star,
        k_theta,
        k_theta_std_err,
        k_argmin,
    })
}

#[derive(Debug, Clone)]
pub struct CoveringReport {
    pub r: f64,
    /// Per sample: smallest network-average KL radius to any `θ ∈ Θ`.
    pub radii: Vec<f64>,
    /// Per sample: index of the covering parameter.
    pub nearest: Vec<usize>,
    pub worst_radius: f64,
    /// Indices of samples not covered at radius `r`.
    pub violations: Vec<usize>,
}

impl CoveringReport {
    pub fn is_covering(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every sample `ψ` lies in some ball
/// `{ψ : (1/N) Σ_i E_{P_i}[D_KL(l_i(·; θ) ‖ l_i(·; ψ))] <= r}`.
pub fn verify_r_covering(
    phi_samples: &[Vec<f64>],
    theta: &ParameterSet,
    models: &[LikelihoodModel],
    r: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<CoveringReport, ModelError> {
    let n = models.len() as f64;
    let node_points: Vec<_> = models.iter().map(|m| m.expectation_points(mc_samples, seed)).collect();
    let per_sample: Vec<(f64, usize)> = phi_samples
        .par_iter()
        .map(|psi| {
            let mut best = (f64::INFINITY, 0);
            for (k, p) in theta.points().iter().enumerate() {
                let mut avg = 0.0;
                for (m, pts) in models.iter().zip(&node_points) {
                    let v = m.kl_between_values(p, psi, pts)?;
                    avg += v.iter().zip(pts).map(|(v, (_, w))| v * w).sum::<f64>() / n;
                }
                if avg < best.0 {
                    best = (avg, k);
                }
            }
            Ok(best)
        })
        .collect::<Result<_, ModelError>>()?;
    let radii: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    let nearest = per_sample.iter().map(|s| s.1).collect();
    let worst_radius = radii.iter().copied().fold(0.0, f64::max);
    let violations = (0..radii.len()).filter(|&k| radii[k] > r).collect();
    Ok(CoveringReport { r, radii, nearest, worst_radius, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{InstanceSpace, LabelFamily, Link};
    use approx::assert_abs_diff_eq;

    /// Bernoulli node whose success probability is `θ[0]` on instance `e_0`
    /// and `θ[1]` on `e_1`, observing only the instances in `support`.
    fn node(id: usize, support: Vec<Vec<f64>>, truth: Vec<f64>) -> LikelihoodModel {
        let k = support.len();
        LikelihoodModel::new(
            id,
            InstanceSpace::discrete(support, vec![1.0 / k as f64; k]),
            LabelFamily::Bernoulli { link: Link::Identity },
            truth,
        )
        .unwrap()
    }

    #[test]
    fn single_identifiable_node() {
        let theta = ParameterSet::new(vec![vec![0.9], vec![0.5], vec![0.2]]).unwrap();
        let m = vec![node(0, vec![vec![1.0]], vec![0.9])];
        let t = separation_table(&m, &theta, &[1.0], 1, 0).unwrap();
        assert_eq!(t.theta_star, vec![0]);
        let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        assert_abs_diff_eq!(t.k_theta, kl(0.9, 0.5).min(kl(0.9, 0.2)), epsilon = 1e-12);
        assert_eq!(t.k_argmin, Some((0, 1)));
    }

    #[test]
    fn complementary_nodes_pin_down_truth() {
        // θ = (p on e0, p on e1). Node 0 sees e0 only, node 1 sees e1 only.
        let star = vec![0.8, 0.3];
        let psi = vec![0.8, 0.6]; // agrees with θ* where node 0 looks
        let phi = vec![0.4, 0.3]; // agrees with θ* where node 1 looks
        let theta = ParameterSet::new(vec![star.clone(), psi, phi]).unwrap();
        let models = vec![node(0, vec![vec![1.0, 0.0]], star.clone()), node(1, vec![vec![0.0, 1.0]], star)];
        let sets = ambiguity_sets(&models, &theta, 1, 0).unwrap();
        assert_eq!(sets.theta_bar, vec![vec![0, 1], vec![0, 2]]);
        assert_eq!(sets.theta_star, vec![0]);
        let t = separation_table(&models, &theta, &[0.5, 0.5], 1, 0).unwrap();
        assert!(t.k_theta > 0.0);
        for j in 0..2 {
            for a in 0..3 {
                assert_eq!(t.i_matrix[j][a][a], 0.0);
                for b in 0..3 {
                    assert_eq!(t.i_matrix[j][a][b], -t.i_matrix[j][b][a]);
                }
            }
        }
    }

    #[test]
    fn everything_equivalent_gives_infinite_k() {
        // Node observes only the first coordinate; Θ differs only in the second.
        let theta = ParameterSet::new(vec![vec![0.7, 0.1], vec![0.7, 0.9]]).unwrap();
        let models = vec![node(0, vec![vec![1.0, 0.0]], vec![0.7, 0.5])];
        let t = separation_table(&models, &theta, &[1.0], 1, 0).unwrap();
        assert_eq!(t.theta_star, vec![0, 1]);
        assert!(t.k_theta.is_infinite());
        assert_eq!(t.k_argmin, None);
    }

    #[test]
    fn disjoint_optima_are_not_learnable() {
        let theta = ParameterSet::new(vec![vec![0.2], vec![0.8]]).unwrap();
        let models = vec![node(0, vec![vec![1.0]], vec![0.2]), node(1, vec![vec![1.0]], vec![0.8])];
        assert_eq!(separation_table(&models, &theta, &[0.5, 0.5], 1, 0).unwrap_err(), ModelError::NotGloballyLearnable);
    }

    #[test]
    fn parameters_cover_themselves() {
        let theta = ParameterSet::new(vec![vec![0.2], vec![0.5], vec![0.8]]).unwrap();
        let models = vec![node(0, vec![vec![1.0]], vec![0.5])];
        let rep = verify_r_covering(theta.points(), &theta, &models, 1e-9, 1, 0).unwrap();
        assert!(rep.is_covering());
        assert_eq!(rep.worst_radius, 0.0);
        assert_eq!(rep.nearest, vec![0, 1, 2]);
    }
}
