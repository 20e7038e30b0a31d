#![allow(dead_code)]

use p2pfl::models::{InstanceSpace, LabelFamily, Link};
use p2pfl::sim::{Engine, RecordOptions, TestSetSpec};
use p2pfl::{GaussianBelief, LikelihoodModel, ParameterSet, Scenario, WeightMatrix};

pub const EXAMPLE1_TRUTH: [f64; 3] = [-0.3, 0.5, 0.8];
pub const EXAMPLE1_W: [[f64; 2]; 2] = [[0.9, 0.1], [0.6, 0.4]];

pub fn weights(rows: &[&[f64]]) -> WeightMatrix {
    WeightMatrix::validate(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Three Bernoulli nodes, node `j` seeing only coordinate `j` of the success
/// probability. Θ holds the 8 corners of `{0.1, 0.9}³` plus two points with a
/// 0.05 coordinate; the truth is `(0.9, 0.9, 0.9)`.
pub fn three_node_bernoulli(n_rounds: usize, trials: usize, seed: u64) -> Scenario {
    let mut points = Vec::new();
    for a in [0.9, 0.1] {
        for b in [0.9, 0.1] {
            for c in [0.9, 0.1] {
                points.push(vec![a, b, c]);
            }
        }
    }
    points.push(vec![0.05, 0.9, 0.1]);
    points.push(vec![0.1, 0.05, 0.9]);
    let theta = ParameterSet::new(points).unwrap();
    let models = (0..3)
        .map(|j| {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            LikelihoodModel::new(
                j,
                InstanceSpace::discrete(vec![e], vec![1.0]),
                LabelFamily::Bernoulli { link: Link::Identity },
                vec![0.9; 3],
            )
            .unwrap()
        })
        .collect();
    Scenario {
        graph: weights(&[&[0.6, 0.4, 0.0], &[0.0, 0.7, 0.3], &[0.2, 0.0, 0.8]]),
        engine: Engine::Discrete { theta },
        models,
        n_rounds,
        trials,
        master_seed: seed,
        test_set: None,
        mc_samples: 1,
        delta: Some(0.1),
        c_override: None,
        record: RecordOptions::default(),
    }
}

/// Two-node linear regression: node 0 sees `x₁ ~ U[-1, 1]`, node 1 sees
/// `x₂ ~ U[-1.5, 1.5]`, labels `⟨θ*, [1, x]⟩ + N(0, 0.8²)`.
pub fn example1(graph: WeightMatrix, n_rounds: usize, trials: usize, seed: u64) -> Scenario {
    let low = vec![-1.0, -1.5];
    let high = vec![1.0, 1.5];
    let family = LabelFamily::LinearGaussian { noise_sd: 0.8 };
    let models = [vec![true, false], vec![false, true]]
        .into_iter()
        .enumerate()
        .map(|(i, mask)| {
            LikelihoodModel::new(
                i,
                InstanceSpace::uniform_box(low.clone(), high.clone()).with_mask(mask),
                family.clone(),
                EXAMPLE1_TRUTH.to_vec(),
            )
            .unwrap()
        })
        .collect();
    Scenario {
        graph,
        engine: Engine::Gaussian { prior: GaussianBelief::diagonal(vec![0.0; 3], &[0.5; 3]).unwrap() },
        models,
        n_rounds,
        trials,
        master_seed: seed,
        test_set: Some(TestSetSpec::Generated {
            instances: InstanceSpace::uniform_box(low, high),
            size: 1000,
            truth: EXAMPLE1_TRUTH.to_vec(),
        }),
        mc_samples: 1000,
        delta: None,
        c_override: None,
        record: RecordOptions::default(),
    }
}

pub fn example1_cooperative(n_rounds: usize, trials: usize, seed: u64) -> Scenario {
    example1(weights(&[&EXAMPLE1_W[0], &EXAMPLE1_W[1]]), n_rounds, trials, seed)
}

pub fn example1_isolated(n_rounds: usize, trials: usize, seed: u64) -> Scenario {
    example1(WeightMatrix::identity(2), n_rounds, trials, seed)
}

/// Two logistic-Bernoulli nodes, node `j` seeing `x_j ~ U[0, 2]` and zero
/// elsewhere, with a 5×5 grid over `[-1, 1]²` and truth `(0.4, -0.6)`.
pub fn logistic_grid(n_rounds: usize, trials: usize, seed: u64) -> Scenario {
    let theta = ParameterSet::grid(&[-1.0, -1.0], &[1.0, 1.0], &[5, 5]).unwrap();
    let models = [vec![true, false], vec![false, true]]
        .into_iter()
        .enumerate()
        .map(|(i, mask)| {
            LikelihoodModel::new(
                i,
                InstanceSpace::uniform_box(vec![0.0, 0.0], vec![2.0, 2.0]).with_mask(mask),
                LabelFamily::Bernoulli { link: Link::Logistic },
                vec![0.4, -0.6],
            )
            .unwrap()
        })
        .collect();
    Scenario {
        graph: weights(&[&[0.5, 0.5], &[0.3, 0.7]]),
        engine: Engine::Discrete { theta },
        models,
        n_rounds,
        trials,
        master_seed: seed,
        test_set: None,
        mc_samples: 4000,
        delta: Some(0.1),
        c_override: None,
        record: RecordOptions::default(),
    }
}
