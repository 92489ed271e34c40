//! Total reward, per-sample reward vectors and group-relative advantages.

use super::preference::{pairwise_reward, triplet_reward, RankedBatch, MAGNITUDE_EPS};
use super::response::{response_reward, std_penalty};
use super::RewardError;
use crate::types::{RewardBreakdown, RunConfig, SampleGroup, Stage};

/// Unweighted component rewards of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentRewards {
    pub r_format: f64,
    pub r_loc: f64,
    pub r_pair: f64,
    pub r_tri: f64,
    /// Penalty magnitude (non-negative); only applied in the exploration stage.
    pub r_std_penalty: f64,
}

/// Weights the components into a total reward. The spread penalty is
/// subtracted in [`Stage::Explore`] and dropped (recorded as 0) otherwise.
/// The returned advantage is 0 until [`group_advantages`] fills it in.
pub fn total_reward(c: &ComponentRewards, cfg: &RunConfig, stage: Stage) -> RewardBreakdown {
    let penalty = match stage {
        Stage::Explore => c.r_std_penalty,
        Stage::Stabilize => 0.0,
    };
    let r_total = c.r_format + cfg.alpha * c.r_loc
        + (1.0 - cfg.alpha) * (cfg.beta1 * c.r_pair + cfg.beta2 * c.r_tri)
        - penalty;
    RewardBreakdown {
        r_format: c.r_format,
        r_loc: c.r_loc,
        r_pair: c.r_pair,
        r_tri: c.r_tri,
        r_std_penalty: penalty,
        r_total,
        advantage: 0.0,
    }
}

/// Rewards of one sample's K generations normalized within the group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub advantages: Vec<f64>,
}

/// `a_i = (r_i - mean) / std` with population std. Groups whose std does not
/// exceed `adv_eps` (including exactly constant groups) get all-zero
/// advantages.
pub fn group_advantages(rewards: &[f64], adv_eps: f64) -> AdvantageGroup {
    let k = rewards.len() as f64;
    // two-pass centering
    let rough = rewards.iter().sum::<f64>() / k;
    let shift = rewards.iter().map(|r| r - rough).sum::<f64>() / k;
    let centered: Vec<f64> = rewards.iter().map(|r| (r - rough) - shift).collect();
    let mean = rough + shift;
    let std = (centered.iter().map(|c| c * c).sum::<f64>() / k).sqrt();
    let constant = rewards.windows(2).all(|w| w[0] == w[1]);
    let advantages = if constant || std.is_nan() || std <= adv_eps {
        vec![0.0; rewards.len()]
    } else {
        centered.iter().map(|c| c / std).collect()
    };
    AdvantageGroup { rewards: rewards.to_vec(), mean, std, advantages }
}

/// Scores every generation of every sample in a batch and fills in the
/// group-relative advantages.
///
/// Malformed generations earn zero on every component (including the
/// penalty), never enter a triplet or a ranking, but still take part in
/// their group's advantage normalization. Samples with no valid generation
/// are left out of the cross-sample comparisons. With fewer than three
/// valid generations a sample's response reward is 0; with fewer than three
/// comparable samples the triplet reward is 0.
pub fn score_batch(
    samples: &[SampleGroup],
    cfg: &RunConfig,
    stage: Stage,
) -> Result<Vec<Vec<RewardBreakdown>>, RewardError> {
    let comparable: Vec<usize> =
        (0..samples.len()).filter(|&j| !samples[j].valid_indices().is_empty()).collect();
    let ranked = RankedBatch::new(comparable.iter().map(|&j| samples[j].clone()).collect())?;
    let ground = ranked.ground_truth();

    let mut out = Vec::with_capacity(samples.len());
    for (j, sample) in samples.iter().enumerate() {
        let batch_pos = comparable.iter().position(|&c| c == j);
        let enough_for_loc = sample.valid_indices().len() >= 3;
        let mut breakdowns = Vec::with_capacity(sample.k());
        for (i, gen) in sample.generations().iter().enumerate() {
            let Some(scores) = gen.scores() else {
                breakdowns.push(total_reward(&ComponentRewards::default(), cfg, stage));
                continue;
            };
            let pos = batch_pos.expect("sample with a valid generation is comparable");
            let rank = ranked.rank_of(pos, i).expect("valid generation is ranked");
            let r_loc = if enough_for_loc {
                response_reward(sample, i, cfg.gamma, scores.dims())?
            } else {
                0.0
            };
            let r_pair = if ranked.len() >= 2 {
                pairwise_reward(&ranked, pos, rank, &ground, MAGNITUDE_EPS)?
            } else {
                0.0
            };
            let r_tri = if ranked.len() >= 3 {
                triplet_reward(&ranked, pos, rank, &ground)?
            } else {
                0.0
            };
            let components = ComponentRewards {
                r_format: 1.0,
                r_loc,
                r_pair,
                r_tri,
                r_std_penalty: std_penalty(scores, cfg.delta_min, cfg.lambda_std),
            };
            breakdowns.push(total_reward(&components, cfg, stage));
        }
        let totals: Vec<f64> = breakdowns.iter().map(|b| b.r_total).collect();
        let adv = group_advantages(&totals, cfg.adv_eps);
        for (b, a) in breakdowns.iter_mut().zip(adv.advantages) {
            b.advantage = a;
        }
        out.push(breakdowns);
    }
    Ok(out)
}
