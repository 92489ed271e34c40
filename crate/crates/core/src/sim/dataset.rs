//! Synthetic mean-opinion-score data.
//!
//! Each stimulus has a Gaussian feature vector. Its per-dimension quality is
//! a fixed affine map of the features plus noise, clamped to `[1, 5]`, and
//! its MOS is the mean of the per-dimension qualities.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::types::{RunConfig, IQA_DIMS, SCORE_MAX, SCORE_MIN};

/// Seed of the ground-truth map; independent of the dataset seed so every
/// dataset of a given feature dimension shares one map.
const GROUND_TRUTH_SEED: u64 = 0x51D3_C0DE_7A11_0005;
const QUALITY_SCALE: f64 = 0.9;
const DIM_OFFSETS: [f64; IQA_DIMS] = [0.3, -0.2, 0.1, 0.25, -0.45];
const DIM_PERTURBATION: f64 = 0.35;

/// The fixed feature-to-quality map for one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap {
    /// `IQA_DIMS` unit-norm weight rows.
    pub weights: Vec<Vec<f64>>,
}

impl GroundTruthMap {
    pub fn new(feature_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(GROUND_TRUTH_SEED ^ feature_dim as u64);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let normalize = |v: Vec<f64>| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
        };
        let shared = normalize(draw(feature_dim));
        let weights = (0..IQA_DIMS)
            .map(|_| {
                let e = draw(feature_dim);
                normalize(shared.iter().zip(&e).map(|(s, e)| s + DIM_PERTURBATION * e).collect())
            })
            .collect();
        GroundTruthMap { weights }
    }

    /// Noise-free quality per dimension, clamped to the rating scale.
    pub fn quality(&self, features: &[f64]) -> Vec<f64> {
        self.quality_with_noise(features, &[0.0; IQA_DIMS])
    }

    pub fn quality_with_noise(&self, features: &[f64], noise: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(DIM_OFFSETS)
            .zip(noise)
            .map(|((w, offset), eps)| {
                let proj: f64 = w.iter().zip(features).map(|(a, x)| a * x).sum();
                (3.0 + QUALITY_SCALE * proj + offset + eps).clamp(SCORE_MIN, SCORE_MAX)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub features: Vec<f64>,
    /// True per-dimension quality in `[1, 5]`.
    pub quality: Vec<f64>,
    /// Mean of `quality`.
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub samples: Vec<SyntheticSample>,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn mos(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mos).collect()
    }

    /// Wraps externally supplied samples after checking that they share one
    /// feature and quality dimension and stay on the rating scale.
    pub fn from_samples(samples: Vec<SyntheticSample>, seed: u64) -> Result<Self, SimError> {
        let Some(first) = samples.first() else {
            return Err(SimError::BadArgument("dataset is empty".into()));
        };
        let (f, q) = (first.features.len(), first.quality.len());
        if f == 0 || q == 0 {
            return Err(SimError::BadArgument("features and quality must be non-empty".into()));
        }
        for s in &samples {
            if s.features.len() != f || s.quality.len() != q {
                return Err(SimError::BadArgument(format!("sample `{}` has mismatched dimensions", s.sample_id)));
            }
            if s.features.iter().any(|x| !x.is_finite()) {
                return Err(SimError::BadArgument(format!("sample `{}` has a non-finite feature", s.sample_id)));
            }
            if !s.quality.iter().chain([&s.mos]).all(|v| (SCORE_MIN..=SCORE_MAX).contains(v)) {
                return Err(SimError::BadArgument(format!("sample `{}` is off the rating scale", s.sample_id)));
            }
        }
        Ok(SyntheticDataset { samples, seed })
    }
}

/// The dataset a run configuration describes.
pub fn dataset_for_config(cfg: &RunConfig) -> Result<SyntheticDataset, SimError> {
    generate_dataset(cfg.dataset_size, cfg.feature_dim, cfg.dataset_noise, cfg.seed)
}

/// Draws `n` stimuli with `feature_dim` standard-normal features.
pub fn generate_dataset(n: usize, feature_dim: usize, noise: f64, seed: u64) -> Result<SyntheticDataset, SimError> {
    if n < 2 {
        return Err(SimError::BadArgument(format!("dataset needs at least 2 samples, got {n}")));
    }
    if feature_dim == 0 {
        return Err(SimError::BadArgument("feature_dim must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SimError::BadArgument(format!("noise must be finite and >= 0, got {noise}")));
    }
    let map = GroundTruthMap::new(feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let features: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
            let eps: Vec<f64> = (0..IQA_DIMS).map(|_| noise * rng.sample::<f64, _>(StandardNormal)).collect();
            let quality = map.quality_with_noise(&features, &eps);
            let mos = quality.iter().sum::<f64>() / quality.len() as f64;
            SyntheticSample { sample_id: format!("s{i:05}"), features, quality, mos }
        })
        .collect();
    Ok(SyntheticDataset { samples, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = generate_dataset(16, 8, 0.0, 7).unwrap();
        let b = generate_dataset(16, 8, 0.0, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(16, 8, 0.0, 8).unwrap());
    }

    #[test]
    fn mos_is_mean_of_quality() {
        let d = generate_dataset(64, 8, 0.3, 1).unwrap();
        for s in &d.samples {
            let mean = s.quality.iter().sum::<f64>() / 5.0;
            assert!((s.mos - mean).abs() < 1e-12);
            assert!(s.quality.iter().all(|q| (1.0..=5.0).contains(q)));
        }
    }

    #[test]
    fn opposite_features_give_distinct_mos() {
        let map = GroundTruthMap::new(8);
        let x = [0.4, -0.2, 0.9, 0.1, -0.5, 0.3, 0.2, -0.7];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let mos = |q: Vec<f64>| q.iter().sum::<f64>() / 5.0;
        let (a, b) = (mos(map.quality(&x)), mos(map.quality(&neg)));
        // the offsets cancel in the mean, so MOS is symmetric about 3
        let proj: f64 = map.weights.iter().map(|w| w.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>()).sum::<f64>() / 5.0;
        assert!((a - (3.0 + QUALITY_SCALE * proj)).abs() < 1e-12);
        assert!((b - (3.0 - QUALITY_SCALE * proj)).abs() < 1e-12);
        assert_ne!(a, b);
    }

    #[test]
    fn extreme_features_saturate() {
        let map = GroundTruthMap::new(8);
        let mut dir = [0.0; 8];
        for w in &map.weights {
            for (d, v) in dir.iter_mut().zip(w) {
                *d += v;
            }
        }
        let hi: Vec<f64> = dir.iter().map(|v| 1e3 * v).collect();
        let lo: Vec<f64> = dir.iter().map(|v| -1e3 * v).collect();
        assert_eq!(map.quality(&hi), vec![5.0; 5]);
        assert_eq!(map.quality(&lo), vec![1.0; 5]);
    }

    #[test]
    fn from_samples_checks_shape_and_scale() {
        let d = generate_dataset(4, 3, 0.1, 2).unwrap();
        assert_eq!(SyntheticDataset::from_samples(d.samples.clone(), 2).unwrap(), d);
        let mut bad = d.samples.clone();
        bad[1].features.pop();
        assert!(SyntheticDataset::from_samples(bad, 2).is_err());
        let mut bad = d.samples.clone();
        bad[0].mos = 6.0;
        assert!(SyntheticDataset::from_samples(bad, 2).is_err());
        assert!(SyntheticDataset::from_samples(Vec::new(), 2).is_err());
    }

    #[test]
    fn bad_arguments() {
        assert!(generate_dataset(1, 8, 0.0, 0).is_err());
        assert!(generate_dataset(4, 0, 0.0, 0).is_err());
        assert!(generate_dataset(4, 8, -1.0, 0).is_err());
    }
}
