//! Core domain types: score vectors, generations, sample groups, reward
//! breakdowns and the run configuration.
//!
//! Every constructor validates its invariants and fails with a typed error;
//! no partially-built value escapes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound of the rating scale.
pub const SCORE_MIN: f64 = 1.0;
/// Upper bound of the rating scale.
pub const SCORE_MAX: f64 = 5.0;

/// Number of image quality dimensions: saturation, granularity, sharpness,
/// foreground, background (in that order).
pub const IQA_DIMS: usize = 5;
/// Number of video quality dimensions: global-temporal, local-spatial.
pub const VQA_DIMS: usize = 2;

/// Names of the image quality dimensions in storage order.
pub const IQA_DIM_NAMES: [&str; IQA_DIMS] =
    ["saturation", "granularity", "sharpness", "foreground", "background"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("score {value} at dimension {dim} is outside [1, 5]")]
    OutOfRange { dim: usize, value: f64 },
    #[error("expected {expected} scores, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("mos {0} is outside [1, 5]")]
    MosOutOfRange(f64),
    #[error("log density {0} is not finite")]
    NonFiniteLogDensity(f64),
    #[error("sample group `{0}` has no generations")]
    EmptyGroup(String),
    #[error("feature vector contains a non-finite value")]
    NonFiniteFeature,
}

/// Phase of the two-stage training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Multi-prompt exploration with the dimension-spread penalty.
    Explore,
    /// Single-prompt refinement, no penalty.
    Stabilize,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "explore" => Ok(Stage::Explore),
            "stabilize" => Ok(Stage::Stabilize),
            other => Err(format!("unknown stage `{other}` (expected explore or stabilize)")),
        }
    }
}

/// Which answer template a response follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Iqa,
    Vqa,
}

impl TaskKind {
    /// Number of scores in an answer for this task.
    pub fn dims(self) -> usize {
        match self {
            TaskKind::Iqa => IQA_DIMS,
            TaskKind::Vqa => VQA_DIMS,
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iqa" => Ok(TaskKind::Iqa),
            "vqa" => Ok(TaskKind::Vqa),
            other => Err(format!("unknown task kind `{other}` (expected iqa or vqa)")),
        }
    }
}

fn in_scale(v: f64) -> bool {
    (SCORE_MIN..=SCORE_MAX).contains(&v)
}

/// Per-dimension quality scores of one generation, each in `[1, 5]`.
///
/// Image responses carry five dimensions, video responses two. Values are
/// never clamped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Validates a score tuple of the arity required by `task`.
    pub fn for_task(raw: &[f64], task: TaskKind) -> Result<Self, TypeError> {
        Self::with_dims(raw, task.dims())
    }

    /// Validates a score tuple of exactly `dims` entries.
    pub fn with_dims(raw: &[f64], dims: usize) -> Result<Self, TypeError> {
        if raw.len() != dims {
            return Err(TypeError::WrongArity { expected: dims, got: raw.len() });
        }
        if let Some((dim, &value)) = raw.iter().enumerate().find(|(_, v)| !in_scale(**v)) {
            return Err(TypeError::OutOfRange { dim, value });
        }
        Ok(ScoreVector(raw.to_vec()))
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.0[dim]
    }

    /// Unweighted mean over dimensions.
    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Population standard deviation over dimensions.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var = self.0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / self.0.len() as f64;
        var.sqrt()
    }
}

/// Validates a five-dimensional image quality score vector.
pub fn validate_score_vector(raw: &[f64]) -> Result<ScoreVector, TypeError> {
    ScoreVector::with_dims(raw, IQA_DIMS)
}

/// One sampled response for a stimulus.
///
/// A generation without scores is a format failure: it still exists in its
/// group but earns no reward beyond the (zero) format reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    raw_text: Option<String>,
    scores: Option<ScoreVector>,
    log_density: f64,
    prompt_id: usize,
}

impl Generation {
    pub fn valid(
        scores: ScoreVector,
        log_density: f64,
        prompt_id: usize,
        raw_text: Option<String>,
    ) -> Result<Self, TypeError> {
        if !log_density.is_finite() {
            return Err(TypeError::NonFiniteLogDensity(log_density));
        }
        Ok(Generation { raw_text, scores: Some(scores), log_density, prompt_id })
    }

    /// A generation whose response failed to parse.
    pub fn malformed(raw_text: Option<String>, prompt_id: usize) -> Self {
        Generation { raw_text, scores: None, log_density: 0.0, prompt_id }
    }

    pub fn raw_text(&self) -> Option<&str> {
        self.raw_text.as_deref()
    }

    pub fn scores(&self) -> Option<&ScoreVector> {
        self.scores.as_ref()
    }

    pub fn format_valid(&self) -> bool {
        self.scores.is_some()
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn prompt_id(&self) -> usize {
        self.prompt_id
    }

    /// Mean score over dimensions, `None` for malformed generations.
    pub fn mean_score(&self) -> Option<f64> {
        self.scores.as_ref().map(ScoreVector::mean)
    }
}

/// One stimulus together with its ground-truth MOS and its K generations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    sample_id: String,
    mos: f64,
    features: Option<Vec<f64>>,
    generations: Vec<Generation>,
}

impl SampleGroup {
    pub fn new(
        sample_id: impl Into<String>,
        mos: f64,
        features: Option<Vec<f64>>,
        generations: Vec<Generation>,
    ) -> Result<Self, TypeError> {
        let sample_id = sample_id.into();
        if !in_scale(mos) {
            return Err(TypeError::MosOutOfRange(mos));
        }
        if generations.is_empty() {
            return Err(TypeError::EmptyGroup(sample_id));
        }
        if features.as_ref().is_some_and(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(TypeError::NonFiniteFeature);
        }
        Ok(SampleGroup { sample_id, mos, features, generations })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn mos(&self) -> f64 {
        self.mos
    }

    pub fn features(&self) -> Option<&[f64]> {
        self.features.as_deref()
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn k(&self) -> usize {
        self.generations.len()
    }

    /// Indices of generations that parsed successfully.
    pub fn valid_indices(&self) -> Vec<usize> {
        self.generations
            .iter()
            .enumerate()
            .filter(|(_, g)| g.format_valid())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-generation reward decomposition.
///
/// `r_total = r_format + alpha*r_loc + (1-alpha)*(beta1*r_pair + beta2*r_tri) - r_std_penalty`
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_loc: f64,
    pub r_pair: f64,
    pub r_tri: f64,
    pub r_std_penalty: f64,
    pub r_total: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

/// All hyperparameters of a training or scoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Weight of the response reward against the preference rewards, in `[0, 1]`.
    pub alpha: f64,
    /// Weight of the pairwise comparative reward.
    pub beta1: f64,
    /// Weight of the triplet comparative reward.
    pub beta2: f64,
    /// Sensitivity of the local alignment coefficient.
    pub gamma: f64,
    /// Generations per sample in the exploration stage.
    pub k_stage1: usize,
    /// Generations per sample in the stability stage.
    pub k_stage2: usize,
    pub batch_size: usize,
    /// Size of the exploration prompt pool.
    pub prompt_count: usize,
    pub delta_min: f64,
    pub lambda_std: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    /// Decoupled weight decay of the optimizer.
    pub weight_decay: f64,
    /// Guard added to the group reward std when normalizing advantages.
    pub adv_eps: f64,
    pub seed: u64,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    /// Samples in the generated synthetic dataset.
    pub dataset_size: usize,
    /// Dimension of the synthetic stimulus descriptor.
    pub feature_dim: usize,
    /// Standard deviation of the per-dimension quality noise.
    pub dataset_noise: f64,
    /// Initial per-dimension log standard deviation of the toy policy.
    pub init_log_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.5,
            beta1: 0.375,
            beta2: 0.125,
            gamma: 1.0,
            k_stage1: 12,
            k_stage2: 6,
            batch_size: 16,
            prompt_count: 5,
            delta_min: 0.5,
            lambda_std: 0.5,
            clip_eps: 0.2,
            kl_beta: 0.04,
            learning_rate: 1e-2,
            weight_decay: 0.01,
            adv_eps: 1e-8,
            seed: 0,
            stage1_steps: 200,
            stage2_steps: 300,
            dataset_size: 64,
            feature_dim: 8,
            dataset_noise: 0.1,
            init_log_sigma: -0.5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &str, reason: &str) -> Result<(), ConfigError> {
            Err(ConfigError::InvalidValue { key: key.to_string(), reason: reason.to_string() })
        }
        let finite = [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
            ("delta_min", self.delta_min),
            ("lambda_std", self.lambda_std),
            ("clip_eps", self.clip_eps),
            ("kl_beta", self.kl_beta),
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("adv_eps", self.adv_eps),
            ("dataset_noise", self.dataset_noise),
            ("init_log_sigma", self.init_log_sigma),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return bad(key, "must be finite");
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if self.gamma <= 0.0 {
            return bad("gamma", "must be > 0");
        }
        if self.k_stage1 == 0 {
            return bad("k_stage1", "must be positive");
        }
        if self.k_stage2 == 0 {
            return bad("k_stage2", "must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size", "must be >= 2");
        }
        if self.prompt_count == 0 {
            return bad("prompt_count", "must be positive");
        }
        if self.delta_min < 0.0 {
            return bad("delta_min", "must be >= 0");
        }
        if self.lambda_std < 0.0 {
            return bad("lambda_std", "must be >= 0");
        }
        if self.clip_eps <= 0.0 || self.clip_eps >= 1.0 {
            return bad("clip_eps", "must lie in (0, 1)");
        }
        if self.kl_beta < 0.0 {
            return bad("kl_beta", "must be >= 0");
        }
        if self.learning_rate <= 0.0 {
            return bad("learning_rate", "must be > 0");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay", "must be >= 0");
        }
        if self.adv_eps <= 0.0 {
            return bad("adv_eps", "must be > 0");
        }
        if self.dataset_size < 2 {
            return bad("dataset_size", "must be >= 2");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be positive");
        }
        if self.dataset_noise < 0.0 {
            return bad("dataset_noise", "must be >= 0");
        }
        Ok(())
    }
}
