//! Local instance distributions `P_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceDist {
    /// Finite support with the given probabilities.
    Discrete { points: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Independent uniform coordinates on `[low_m, high_m]`. A coordinate
    /// with `low_m == high_m` is constant.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
}

/// A node's instance distribution, optionally restricted to a coordinate
/// subspace: masked-out coordinates are zeroed after sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpace {
    pub dist: InstanceDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

impl InstanceSpace {
    pub fn new(dist: InstanceDist) -> Self {
        Self { dist, mask: None }
    }

    pub fn uniform_box(low: Vec<f64>, high: Vec<f64>) -> Self {
        Self::new(InstanceDist::UniformBox { low, high })
    }

    pub fn discrete(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Self {
        Self::new(InstanceDist::Discrete { points, probs })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn dim(&self) -> usize {
        match &self.dist {
            InstanceDist::Discrete { points, .. } => points.first().map_or(0, Vec::len),
            InstanceDist::UniformBox { low, .. } => low.len(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidInstances(msg));
        match &self.dist {
            InstanceDist::Discrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return bad("discrete support needs one probability per point".into());
                }
                let d = points[0].len();
                if points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
                    return bad("discrete points must be finite and share a dimension".into());
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return bad("discrete probabilities must be non-negative and sum to 1".into());
                }
            }
            InstanceDist::UniformBox { low, high } => {
                if low.len() != high.len() {
                    return bad("box bounds differ in length".into());
                }
                if low.iter().zip(high).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
                    return bad("box bounds must be finite with low <= high".into());
                }
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() != self.dim() {
                return bad(format!("mask has {} entries, instances have {}", mask.len(), self.dim()));
            }
        }
        Ok(())
    }

    fn apply_mask(&self, mut x: Vec<f64>) -> Vec<f64> {
        if let Some(mask) = &self.mask {
            for (v, keep) in x.iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let x = match &self.dist {
            InstanceDist::Discrete { points, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = points.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                points[pick].clone()
            }
            InstanceDist::UniformBox { low, high } => low
                .iter()
                .zip(high)
                .map(|(&l, &h)| if l == h { l } else { l + (h - l) * rng.random::<f64>() })
                .collect(),
        };
        self.apply_mask(x)
    }

    /// Weighted points approximating `E_P[·]`: the exact support for
    /// discrete distributions, `mc_samples` equally weighted draws otherwise.
    pub fn expectation_points<R: Rng + ?Sized>(&self, mc_samples: usize, rng: &mut R) -> Vec<(Vec<f64>, f64)> {
        match &self.dist {
            InstanceDist::Discrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(x, &p)| (self.apply_mask(x.clone()), p))
                .collect(),
            InstanceDist::UniformBox { .. } => {
                let w = 1.0 / mc_samples as f64;
                (0..mc_samples).map(|_| (self.sample(rng), w)).collect()
            }
        }
    }

    /// True when `expectation_points` is exact.
    pub fn has_finite_support(&self) -> bool {
        matches!(self.dist, InstanceDist::Discrete { .. })
    }

    /// Points whose convex hull contains the support: the discrete support or
    /// the box corners (after masking).
    pub fn extreme_points(&self) -> Vec<Vec<f64>> {
        match &self.dist {
            InstanceDist::Discrete { points, .. } => points.iter().map(|p| self.apply_mask(p.clone())).collect(),
            InstanceDist::UniformBox { low, high } => {
                let d = low.len();
                let mut corners = vec![Vec::with_capacity(d)];
                for m in 0..d {
                    let vals: &[f64] = if low[m] == high[m] { &low[m..=m] } else { &[low[m], high[m]] };
                    corners = corners
                        .into_iter()
                        .flat_map(|c| {
                            vals.iter().map(move |&v| {
                                let mut c = c.clone();
                                c.push(v);
                                c
                            })
                        })
                        .collect();
                }
                corners.into_iter().map(|c| self.apply_mask(c)).collect()
            }
        }
    }

    /// Second moment `E[x̃ x̃ᵀ]` of the intercept-augmented instance, where
    /// available in closed form.
    pub fn augmented_second_moment(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut m = vec![vec![0.0; d + 1]; d + 1];
        match &self.dist {
            InstanceDist::Discrete { points, probs } => {
                for (p, &w) in points.iter().zip(probs) {
                    let mut xt = vec![1.0];
                    xt.extend(self.apply_mask(p.clone()));
                    for a in 0..=d {
                        for b in 0..=d {
                            m[a][b] += w * xt[a] * xt[b];
                        }
                    }
                }
            }
            InstanceDist::UniformBox { low, high } => {
                let keep = |k: usize| self.mask.as_ref().is_none_or(|mk| mk[k]);
                let mean: Vec<f64> = (0..d).map(|k| if keep(k) { 0.5 * (low[k] + high[k]) } else { 0.0 }).collect();
                let var: Vec<f64> =
                    (0..d).map(|k| if keep(k) { (high[k] - low[k]).powi(2) / 12.0 } else { 0.0 }).collect();
                m[0][0] = 1.0;
                for a in 0..d {
                    m[0][a + 1] = mean[a];
                    m[a + 1][0] = mean[a];
                    for b in 0..d {
                        m[a + 1][b + 1] = mean[a] * mean[b] + if a == b { var[a] } else { 0.0 };
                    }
                }
            }
        }
        m
    }
}
