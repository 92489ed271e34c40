//! Brute-force reference implementation of the batch reward.
//!
//! Everything here is recomputed from raw score arrays by direct
//! enumeration: ranks by counting, triplets by scanning all index triples,
//! medians by sorting. It shares no code with [`crate::rewards`] and exists
//! to cross-check it on small instances.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::aggregate::score_batch;
use crate::rewards::RewardError;
use crate::types::{ConfigError, Generation, RewardBreakdown, RunConfig, SampleGroup, ScoreVector, Stage, TypeError};

const EPS_M: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cannot read instance: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad instance: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("generations of one instance must all have {expected} scores, found {got}")]
    MixedDims { expected: usize, got: usize },
}

/// One sample of an instance; `null` generations are malformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSample {
    pub sample_id: String,
    pub mos: f64,
    pub generations: Vec<Option<Vec<f64>>>,
}

/// A self-contained reward problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleInstance {
    #[serde(default)]
    pub config: RunConfig,
    pub stage: Stage,
    pub samples: Vec<InstanceSample>,
}

impl OracleInstance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn dims(&self) -> Result<usize, OracleError> {
        let mut dims = None;
        for v in self.samples.iter().flat_map(|s| s.generations.iter().flatten()) {
            match dims {
                None => dims = Some(v.len()),
                Some(d) if d != v.len() => return Err(OracleError::MixedDims { expected: d, got: v.len() }),
                _ => {}
            }
        }
        Ok(dims.unwrap_or(0))
    }

    /// The instance as validated sample groups.
    pub fn to_groups(&self) -> Result<Vec<SampleGroup>, OracleError> {
        let dims = self.dims()?;
        self.samples
            .iter()
            .map(|s| {
                let gens = s
                    .generations
                    .iter()
                    .map(|g| match g {
                        Some(v) => Generation::valid(ScoreVector::with_dims(v, dims)?, 0.0, 1, None),
                        None => Ok(Generation::malformed(None, 1)),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SampleGroup::new(s.sample_id.clone(), s.mos, None, gens)?)
            })
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sign3(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn consistent(s_a: f64, s_b: f64, g_a: f64, g_b: f64) -> bool {
    sign3(s_a - s_b) == sign3(g_a - g_b)
}

/// Rank of generation `i` by counting: valid generations with a smaller
/// mean, or an equal mean and a smaller index, come first.
fn count_rank(means: &[Option<f64>], i: usize) -> usize {
    let mi = means[i].expect("ranked generation is valid");
    means
        .iter()
        .enumerate()
        .filter(|&(g, m)| m.is_some_and(|m| m < mi || (m == mi && g < i)))
        .count()
}

fn mean_at_rank(means: &[Option<f64>], rank: usize) -> Option<f64> {
    (0..means.len()).filter(|&g| means[g].is_some()).find(|&g| count_rank(means, g) == rank).and_then(|g| means[g])
}

fn response_oracle(gens: &[Option<Vec<f64>>], i: usize, gamma: f64) -> f64 {
    let anchor = gens[i].as_ref().expect("anchor is valid");
    let n = gens.len();
    let dims = anchor.len();
    let mut per_dim = 0.0;
    for d in 0..dims {
        let (mut sum, mut count) = (0.0, 0usize);
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if a != i && b != i && c != i {
                        continue;
                    }
                    let (Some(x), Some(y), Some(z)) = (&gens[a], &gens[b], &gens[c]) else { continue };
                    let mut t = [x[d], y[d], z[d]];
                    t.sort_by(f64::total_cmp);
                    sum += (-gamma * (anchor[d] - t[1]).abs()).exp();
                    count += 1;
                }
            }
        }
        per_dim += sum / count as f64;
    }
    per_dim / dims as f64
}

/// Rewards and advantages of every generation, computed by enumeration.
pub fn oracle_rewards(instance: &OracleInstance) -> Vec<Vec<RewardBreakdown>> {
    let cfg = &instance.config;
    let samples = &instance.samples;
    let means: Vec<Vec<Option<f64>>> =
        samples.iter().map(|s| s.generations.iter().map(|g| g.as_deref().map(mean)).collect()).collect();
    let comparable: Vec<usize> = (0..samples.len()).filter(|&j| means[j].iter().any(Option::is_some)).collect();

    let mut out = Vec::new();
    for (j, sample) in samples.iter().enumerate() {
        let n_valid = sample.generations.iter().filter(|g| g.is_some()).count();
        let mut rows = Vec::new();
        for (i, gen) in sample.generations.iter().enumerate() {
            let Some(scores) = gen else {
                rows.push(RewardBreakdown::default());
                continue;
            };
            let r_loc = if n_valid >= 3 { response_oracle(&sample.generations, i, cfg.gamma) } else { 0.0 };

            let rank = count_rank(&means[j], i);
            let s_j = means[j][i].expect("valid");
            let g_j = sample.mos;
            let peers: Vec<(f64, f64)> = comparable
                .iter()
                .filter(|&&m| m != j)
                .filter_map(|&m| mean_at_rank(&means[m], rank).map(|s| (s, samples[m].mos)))
                .collect();

            let mut pair_sum = 0.0;
            for &(s_m, g_m) in &peers {
                let big_m = (g_j - g_m).abs() / ((s_j - s_m).abs() + (s_j - g_j).abs() + (s_m - g_m).abs() + EPS_M);
                pair_sum += if consistent(s_j, s_m, g_j, g_m) { (big_m / 2.0).exp() } else { (-(1.0 + big_m) / 2.0).exp() };
            }
            let r_pair = if peers.is_empty() { 0.0 } else { pair_sum / peers.len() as f64 };

            let (mut tri_sum, mut tri_n) = (0.0, 0usize);
            if comparable.len() >= 3 {
                for a in 0..peers.len() {
                    for b in a + 1..peers.len() {
                        let ((s_m, g_m), (s_n, g_n)) = (peers[a], peers[b]);
                        let all = consistent(s_j, s_m, g_j, g_m)
                            && consistent(s_j, s_n, g_j, g_n)
                            && consistent(s_m, s_n, g_m, g_n);
                        tri_sum += if all { 1.0 } else { 0.3 };
                        tri_n += 1;
                    }
                }
            }
            let r_tri = if tri_n == 0 { 0.0 } else { tri_sum / tri_n as f64 };

            let mu = mean(scores);
            let sigma = (scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / scores.len() as f64).sqrt();
            let penalty = match instance.stage {
                Stage::Explore if sigma < cfg.delta_min => cfg.lambda_std * (cfg.delta_min - sigma),
                _ => 0.0,
            };
            let r_total = 1.0 + cfg.alpha * r_loc + (1.0 - cfg.alpha) * (cfg.beta1 * r_pair + cfg.beta2 * r_tri) - penalty;
            rows.push(RewardBreakdown {
                r_format: 1.0,
                r_loc,
                r_pair,
                r_tri,
                r_std_penalty: penalty,
                r_total,
                advantage: 0.0,
            });
        }

        let totals: Vec<f64> = rows.iter().map(|r| r.r_total).collect();
        let mu = mean(&totals);
        let sd = (totals.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / totals.len() as f64).sqrt();
        let flat = totals.iter().all(|&r| r == totals[0]);
        for r in &mut rows {
            r.advantage = if flat || sd <= cfg.adv_eps { 0.0 } else { (r.r_total - mu) / sd };
        }
        out.push(rows);
    }
    out
}

/// Largest absolute difference over every field of every generation.
pub fn max_abs_diff(a: &[Vec<RewardBreakdown>], b: &[Vec<RewardBreakdown>]) -> f64 {
    let fields = |r: &RewardBreakdown| [r.r_format, r.r_loc, r.r_pair, r.r_tri, r.r_std_penalty, r.r_total, r.advantage];
    assert_eq!(a.len(), b.len(), "batch shapes differ");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "group shapes differ");
            x.iter().zip(y)
        })
        .flat_map(|(x, y)| fields(x).into_iter().zip(fields(y)))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Oracle result next to the fast-path result for the same instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub oracle: Vec<Vec<RewardBreakdown>>,
    pub fast: Vec<Vec<RewardBreakdown>>,
    pub max_abs_diff: f64,
}

pub fn compare_instance(instance: &OracleInstance) -> Result<OracleComparison, OracleError> {
    instance.config.validate()?;
    let groups = instance.to_groups()?;
    let fast = score_batch(&groups, &instance.config, instance.stage)?;
    let oracle = oracle_rewards(instance);
    let max_abs_diff = max_abs_diff(&fast, &oracle);
    Ok(OracleComparison { oracle, fast, max_abs_diff })
}
