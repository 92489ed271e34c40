//! The two-stage training loop on synthetic data.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::SyntheticDataset;
use super::policy::{ToyAction, ToyPolicy};
use super::SimError;
use crate::grpo::{advance_schedule, policy_gradient_step, AdamW, LogDensityModel, PolicySnapshot, PolicyTerm, StageSchedule};
use crate::metrics::{metric_report, MetricReport, DEFAULT_BIN_WIDTH};
use crate::rewards::aggregate::score_batch;
use crate::types::{RunConfig, SampleGroup, Stage};

/// Diagnostics of one executed step, measured on that step's rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub stage: Stage,
    pub k: usize,
    pub prompt_pool_size: usize,
    pub objective: f64,
    pub mean_reward: f64,
    /// Mean over samples of the within-group reward standard deviation.
    pub reward_std: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    /// Mean over samples and dimensions of the across-generation score std.
    pub mean_generation_std: f64,
    /// Mean over generations of the dimension-wise score std.
    pub mean_cot_answer_std: f64,
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_echo: RunConfig,
    pub per_step: Vec<StepRecord>,
    pub initial_metrics: MetricReport,
    pub final_metrics: MetricReport,
    pub final_params: Vec<f64>,
    /// Runtime only; not persisted.
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

const INIT_STREAM: u64 = u64::MAX;
const BATCH_STREAM: u64 = u64::MAX - 1;

/// Seed of an independent stream addressed by `(seed, step, slot)`.
pub fn stream_seed(seed: u64, step: u64, slot: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ step) ^ slot)
}

fn evaluate(policy: &ToyPolicy, dataset: &SyntheticDataset) -> Result<MetricReport, SimError> {
    let pred: Vec<f64> = dataset.samples.iter().map(|s| policy.predict(&s.features)).collect();
    Ok(metric_report(&pred, &dataset.mos(), DEFAULT_BIN_WIDTH)?)
}

fn population_std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn diagnostics(groups: &[SampleGroup], totals: &[Vec<f64>]) -> (f64, f64, f64, f64) {
    let n_gen = totals.iter().map(Vec::len).sum::<usize>() as f64;
    let mean_reward = totals.iter().flatten().sum::<f64>() / n_gen;
    let reward_std =
        totals.iter().map(|t| population_std(t.iter().copied())).sum::<f64>() / totals.len() as f64;

    let (mut gen_std, mut gen_std_n) = (0.0, 0usize);
    let (mut answer_std, mut answer_n) = (0.0, 0usize);
    for g in groups {
        let scores: Vec<_> = g.generations().iter().filter_map(|x| x.scores()).collect();
        let Some(first) = scores.first() else { continue };
        for d in 0..first.dims() {
            gen_std += population_std(scores.iter().map(|s| s.get(d)));
            gen_std_n += 1;
        }
        for s in &scores {
            answer_std += s.std();
            answer_n += 1;
        }
    }
    (mean_reward, reward_std, gen_std / gen_std_n as f64, answer_std / answer_n as f64)
}

/// Runs the exploration stage followed by the stability stage on `dataset`
/// and reports per-step diagnostics plus SRCC/PLCC of the policy's mean
/// predictions against MOS before and after training.
pub fn run_training(cfg: &RunConfig, dataset: &SyntheticDataset) -> Result<RunReport, SimError> {
    let started = Instant::now();
    cfg.validate()?;
    if dataset.len() < cfg.batch_size {
        return Err(SimError::BadArgument(format!(
            "batch size {} exceeds dataset size {}",
            cfg.batch_size,
            dataset.len()
        )));
    }
    let dims = dataset.samples[0].quality.len();
    let mut policy = ToyPolicy::init(
        dataset.feature_dim(),
        dims,
        cfg.init_log_sigma,
        stream_seed(cfg.seed, 0, INIT_STREAM),
    );
    let shape = policy.shape;
    let reference = policy.params.clone();
    let mut snapshot = PolicySnapshot::new(policy.params.clone());
    let mut optimizer = AdamW::new(
        shape.num_params(),
        cfg.learning_rate,
        cfg.weight_decay,
        cfg.stage1_steps + cfg.stage2_steps,
    );
    let initial_metrics = evaluate(&policy, dataset)?;

    let mut sched = StageSchedule::start(cfg);
    let mut per_step = Vec::with_capacity(cfg.stage1_steps + cfg.stage2_steps);
    let mut step = 0usize;
    while !sched.finished() {
        step += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, step as u64, BATCH_STREAM));
        let picks = index::sample(&mut rng, dataset.len(), cfg.batch_size).into_vec();

        let mut groups = Vec::with_capacity(picks.len());
        let mut actions: Vec<Vec<ToyAction>> = Vec::with_capacity(picks.len());
        for (slot, &idx) in picks.iter().enumerate() {
            let sample = &dataset.samples[idx];
            let prompt_id =
                if sched.prompt_pool_size > 1 { rng.random_range(1..=sched.prompt_pool_size) } else { 1 };
            let rollouts = policy.sample_rollouts(
                &sample.features,
                sched.k,
                prompt_id,
                stream_seed(cfg.seed, step as u64, slot as u64),
            )?;
            let (gens, acts): (Vec<_>, Vec<_>) = rollouts.into_iter().map(|r| (r.generation, r.action)).unzip();
            groups.push(SampleGroup::new(sample.sample_id.clone(), sample.mos, Some(sample.features.clone()), gens)?);
            actions.push(acts);
        }

        let rewards = score_batch(&groups, cfg, sched.stage)?;
        let terms: Vec<Vec<PolicyTerm<ToyAction>>> = groups
            .iter()
            .zip(actions)
            .zip(&rewards)
            .map(|((group, acts), breakdowns)| {
                group
                    .generations()
                    .iter()
                    .zip(acts)
                    .zip(breakdowns)
                    .map(|((gen, action), b)| PolicyTerm {
                        logp_ref: shape.log_density(&reference, &action),
                        logp_old: gen.log_density(),
                        advantage: b.advantage,
                        sample: action,
                    })
                    .collect()
            })
            .collect();

        let outcome = policy_gradient_step(&shape, &snapshot, &terms, sched.k, cfg, &mut optimizer)?;
        let totals: Vec<Vec<f64>> = rewards.iter().map(|g| g.iter().map(|b| b.r_total).collect()).collect();
        let (mean_reward, reward_std, mean_generation_std, mean_cot_answer_std) = diagnostics(&groups, &totals);
        per_step.push(StepRecord {
            step,
            stage: sched.stage,
            k: sched.k,
            prompt_pool_size: sched.prompt_pool_size,
            objective: outcome.eval.objective,
            mean_reward,
            reward_std,
            mean_kl: outcome.eval.mean_kl,
            clip_fraction: outcome.eval.clip_fraction,
            mean_generation_std,
            mean_cot_answer_std,
        });

        snapshot = outcome.snapshot;
        policy.params.clone_from(&snapshot.params);
        sched = advance_schedule(sched);
    }

    let final_metrics = evaluate(&policy, dataset)?;
    Ok(RunReport {
        config_echo: cfg.clone(),
        per_step,
        initial_metrics,
        final_metrics,
        final_params: policy.params,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}
