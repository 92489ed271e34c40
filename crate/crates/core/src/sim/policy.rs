//! Diagonal-Gaussian score policy.
//!
//! For features `x` the policy draws a pre-squash action
//! `u_d ~ N(μ_d, σ_d²)` with `μ = W x + b + offset(prompt)` and emits the
//! score `s_d = 1 + 4·sigmoid(u_d)`. Stored log densities are those of the
//! emitted score vector, i.e. the Gaussian log density minus the log
//! Jacobian of the squash. The Jacobian does not depend on the parameters.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grpo::LogDensityModel;
use crate::types::{Generation, ScoreVector, TypeError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Maps a pre-squash action into `[1, 5]`.
pub fn squash(u: f64) -> f64 {
    1.0 + 4.0 / (1.0 + (-u).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln |d squash / du|`, computed without cancellation for large `|u|`.
pub fn log_squash_jacobian(u: f64) -> f64 {
    4f64.ln() - softplus(u) - softplus(-u)
}

/// Fixed per-prompt mean offset. Prompt 1 is the standard prompt and has no
/// offset; the others shift each dimension by at most 0.15.
pub fn prompt_offset(prompt_id: usize, dim: usize) -> f64 {
    if prompt_id <= 1 {
        0.0
    } else {
        0.15 * (1.7 * prompt_id as f64 + 2.3 * dim as f64).sin()
    }
}

/// Shape of the policy parameter vector:
/// `[W (dims × feature_dim, row-major) | bias (dims) | log_sigma (dims)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub feature_dim: usize,
    pub dims: usize,
}

impl PolicyShape {
    pub fn num_params(&self) -> usize {
        self.dims * (self.feature_dim + 2)
    }

    fn bias_offset(&self) -> usize {
        self.dims * self.feature_dim
    }

    fn log_sigma_offset(&self) -> usize {
        self.dims * (self.feature_dim + 1)
    }

    /// Pre-squash mean of dimension `d`.
    pub fn mean(&self, params: &[f64], features: &[f64], prompt_id: usize, d: usize) -> f64 {
        let row = &params[d * self.feature_dim..(d + 1) * self.feature_dim];
        let wx: f64 = row.iter().zip(features).map(|(w, x)| w * x).sum();
        wx + params[self.bias_offset() + d] + prompt_offset(prompt_id, d)
    }

    pub fn log_sigma(&self, params: &[f64], d: usize) -> f64 {
        params[self.log_sigma_offset() + d]
    }
}

/// Conditioning context and drawn pre-squash action of one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyAction {
    pub features: Vec<f64>,
    pub prompt_id: usize,
    pub action: Vec<f64>,
}

impl LogDensityModel for PolicyShape {
    type Sample = ToyAction;

    fn num_params(&self) -> usize {
        PolicyShape::num_params(self)
    }

    fn log_density(&self, params: &[f64], s: &ToyAction) -> f64 {
        (0..self.dims)
            .map(|d| {
                let mu = self.mean(params, &s.features, s.prompt_id, d);
                let log_sigma = self.log_sigma(params, d);
                let z = (s.action[d] - mu) * (-log_sigma).exp();
                -0.5 * z * z - log_sigma - LN_SQRT_2PI - log_squash_jacobian(s.action[d])
            })
            .sum()
    }

    fn accumulate_grad(&self, params: &[f64], s: &ToyAction, scale: f64, grad: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for d in 0..self.dims {
            let mu = self.mean(params, &s.features, s.prompt_id, d);
            let log_sigma = self.log_sigma(params, d);
            let inv_sigma = (-log_sigma).exp();
            let z = (s.action[d] - mu) * inv_sigma;
            total += -0.5 * z * z - log_sigma - LN_SQRT_2PI - log_squash_jacobian(s.action[d]);

            let d_mu = scale * z * inv_sigma;
            let row = &mut grad[d * self.feature_dim..(d + 1) * self.feature_dim];
            for (g, x) in row.iter_mut().zip(&s.features) {
                *g += d_mu * x;
            }
            grad[self.bias_offset() + d] += d_mu;
            grad[self.log_sigma_offset() + d] += scale * (z * z - 1.0);
        }
        total
    }
}

/// A toy policy: its shape plus one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    pub shape: PolicyShape,
    pub params: Vec<f64>,
}

/// A sampled generation with the action that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub generation: Generation,
    pub action: ToyAction,
}

impl ToyPolicy {
    /// Small random weights, zero bias, constant log-sigma.
    pub fn init(feature_dim: usize, dims: usize, init_log_sigma: f64, seed: u64) -> Self {
        let shape = PolicyShape { feature_dim, dims };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; shape.num_params()];
        for w in &mut params[..dims * feature_dim] {
            *w = 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        for ls in &mut params[shape.log_sigma_offset()..] {
            *ls = init_log_sigma;
        }
        ToyPolicy { shape, params }
    }

    pub fn from_params(shape: PolicyShape, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), shape.num_params(), "parameter count does not match shape");
        ToyPolicy { shape, params }
    }

    pub fn weight(&self, d: usize, f: usize) -> f64 {
        self.params[d * self.shape.feature_dim + f]
    }

    pub fn bias(&self, d: usize) -> f64 {
        self.params[self.shape.bias_offset() + d]
    }

    pub fn log_sigma(&self, d: usize) -> f64 {
        self.shape.log_sigma(&self.params, d)
    }

    /// Squashed mean score per dimension under `prompt_id`.
    pub fn mean_scores(&self, features: &[f64], prompt_id: usize) -> Vec<f64> {
        (0..self.shape.dims).map(|d| squash(self.shape.mean(&self.params, features, prompt_id, d))).collect()
    }

    /// Point prediction: mean over dimensions of the squashed means under the
    /// standard prompt.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let s = self.mean_scores(features, 1);
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Draws `k` independent generations.
    pub fn sample_rollouts(&self, features: &[f64], k: usize, prompt_id: usize, seed: u64) -> Result<Vec<Rollout>, TypeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = self.shape.dims;
        let means: Vec<f64> = (0..dims).map(|d| self.shape.mean(&self.params, features, prompt_id, d)).collect();
        let sigmas: Vec<f64> = (0..dims).map(|d| self.log_sigma(d).exp()).collect();
        (0..k)
            .map(|_| {
                let action: Vec<f64> = (0..dims)
                    .map(|d| means[d] + sigmas[d] * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let scores: Vec<f64> = action.iter().map(|&u| squash(u)).collect();
                let action = ToyAction { features: features.to_vec(), prompt_id, action };
                let log_density = self.shape.log_density(&self.params, &action);
                let generation =
                    Generation::valid(ScoreVector::with_dims(&scores, dims)?, log_density, prompt_id, None)?;
                Ok(Rollout { generation, action })
            })
            .collect()
    }
}

/// Draws `k` generations of `policy` for one stimulus.
pub fn sample_generations(
    policy: &ToyPolicy,
    features: &[f64],
    k: usize,
    prompt_id: usize,
    seed: u64,
) -> Result<Vec<Generation>, TypeError> {
    Ok(policy.sample_rollouts(features, k, prompt_id, seed)?.into_iter().map(|r| r.generation).collect())
}
