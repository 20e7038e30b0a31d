//! Label families and the conditional label laws they induce.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// How a Bernoulli success probability is formed from `⟨θ, x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `p = 1 / (1 + exp(-⟨θ, x⟩))`
    Logistic,
    /// `p = ⟨θ, x⟩`, which must lie in `[0, 1]`.
    Identity,
}

/// Parametric family of label laws `l(y; θ, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelFamily {
    /// Binary labels `y ∈ {0, 1}`; `θ` has the instance dimension.
    Bernoulli { link: Link },
    /// Labels `y ∈ {0, .., classes-1}` with softmax logits; `θ` holds one
    /// weight row per class, so `|θ| = classes * |x|`.
    Categorical { classes: usize },
    /// `y = ⟨θ, [1, x]⟩ + η`, `η ~ N(0, noise_sd²)`; `|θ| = |x| + 1`.
    LinearGaussian { noise_sd: f64 },
}

/// A fully specified conditional label law.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelDist {
    Bernoulli(f64),
    Categorical(Vec<f64>),
    Normal { mean: f64, sd: f64 },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `x ln(x / y)` with the `0 ln 0 = 0` convention.
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

impl LabelFamily {
    /// Expected length of `θ` for instances of dimension `dim`.
    pub fn parameter_dim(&self, dim: usize) -> usize {
        match self {
            LabelFamily::Bernoulli { .. } => dim,
            LabelFamily::Categorical { classes } => classes * dim,
            LabelFamily::LinearGaussian { .. } => dim + 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LabelFamily::Categorical { classes } if classes < 2 => {
                Err(ModelError::InvalidFamily("categorical family needs at least 2 classes".into()))
            }
            LabelFamily::LinearGaussian { noise_sd } if !(noise_sd.is_finite() && noise_sd > 0.0) => {
                Err(ModelError::InvalidFamily(format!("noise_sd must be positive, got {noise_sd}")))
            }
            _ => Ok(()),
        }
    }

    pub fn noise_var(&self) -> Option<f64> {
        match self {
            LabelFamily::LinearGaussian { noise_sd } => Some(noise_sd * noise_sd),
            _ => None,
        }
    }

    /// Whether likelihoods are bounded away from zero and infinity.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, LabelFamily::LinearGaussian { .. })
    }

    pub fn dist(&self, theta: &[f64], x: &[f64]) -> Result<LabelDist, ModelError> {
        let expected = self.parameter_dim(x.len());
        if theta.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, found: theta.len() });
        }
        match *self {
            LabelFamily::Bernoulli { link } => {
                let eta = dot(theta, x);
                let p = match link {
                    Link::Logistic => sigmoid(eta),
                    Link::Identity => eta,
                };
                if !(0.0..=1.0).contains(&p) {
                    return Err(ModelError::InvalidProbability(p));
                }
                Ok(LabelDist::Bernoulli(p))
            }
            LabelFamily::Categorical { classes } => {
                let d = x.len();
                let logits: Vec<f64> = (0..classes).map(|k| dot(&theta[k * d..(k + 1) * d], x)).collect();
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                Ok(LabelDist::Categorical(exps.into_iter().map(|e| e / z).collect()))
            }
            LabelFamily::LinearGaussian { noise_sd } => {
                Ok(LabelDist::Normal { mean: theta[0] + dot(&theta[1..], x), sd: noise_sd })
            }
        }
    }
}

const QUADRATURE_HALF_WIDTH: f64 = 12.0;
const QUADRATURE_INTERVALS: usize = 4000;

fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule on `[a, b]`.
fn simpson(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = QUADRATURE_INTERVALS;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

impl LabelDist {
    /// Log density (continuous) or log mass (discrete) at `y`.
    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            LabelDist::Bernoulli(p) => {
                if y >= 0.5 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            LabelDist::Categorical(probs) => {
                let k = y.round();
                if k < 0.0 || k as usize >= probs.len() {
                    f64::NEG_INFINITY
                } else {
                    probs[k as usize].ln()
                }
            }
            LabelDist::Normal { mean, sd } => {
                let z = (y - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LabelDist::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            LabelDist::Categorical(probs) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k as f64;
                    }
                }
                (probs.len() - 1) as f64
            }
            LabelDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
        }
    }

    /// Closed-form `D_KL(self ‖ other)` in nats; `+∞` on support mismatch.
    pub fn kl(&self, other: &LabelDist) -> f64 {
        match (self, other) {
            (LabelDist::Bernoulli(p), LabelDist::Bernoulli(q)) => xlogx_over(*p, *q) + xlogx_over(1.0 - p, 1.0 - q),
            (LabelDist::Categorical(p), LabelDist::Categorical(q)) => {
                p.iter().zip(q).map(|(a, b)| xlogx_over(*a, *b)).sum()
            }
            (LabelDist::Normal { mean: m1, sd: s1 }, LabelDist::Normal { mean: m2, sd: s2 }) => {
                let d = m1 - m2;
                (s2 / s1).ln() + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5
            }
            _ => f64::NAN,
        }
    }

    /// `∫ |self(y) - other(y)| dy` (twice the total-variation distance).
    pub fn l1_distance(&self, other: &LabelDist) -> f64 {
        match (self, other) {
            (LabelDist::Bernoulli(p), LabelDist::Bernoulli(q)) => 2.0 * (p - q).abs(),
            (LabelDist::Categorical(p), LabelDist::Categorical(q)) => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
            (LabelDist::Normal { mean: m1, sd: s1 }, LabelDist::Normal { mean: m2, sd: s2 }) => {
                let w = QUADRATURE_HALF_WIDTH * s1.max(*s2);
                let (a, b) = (m1.min(*m2) - w, m1.max(*m2) + w);
                simpson(a, b, |y| (normal_pdf(y, *m1, *s1) - normal_pdf(y, *m2, *s2)).abs())
            }
            _ => f64::NAN,
        }
    }

    /// `E[g(Y)]` under this law.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            LabelDist::Bernoulli(p) => (1.0 - p) * g(0.0) + p * g(1.0),
            LabelDist::Categorical(probs) => probs.iter().enumerate().map(|(k, p)| p * g(k as f64)).sum(),
            LabelDist::Normal { mean, sd } => {
                let w = QUADRATURE_HALF_WIDTH * sd;
                simpson(mean - w, mean + w, |y| g(y) * normal_pdf(y, *mean, *sd))
            }
        }
    }

    /// Smallest and largest probability mass; `None` for continuous laws.
    pub fn mass_range(&self) -> Option<(f64, f64)> {
        match self {
            LabelDist::Bernoulli(p) => Some((p.min(1.0 - p), p.max(1.0 - p))),
            LabelDist::Categorical(probs) => Some((
                probs.iter().copied().fold(f64::INFINITY, f64::min),
                probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )),
            LabelDist::Normal { .. } => None,
        }
    }
}
