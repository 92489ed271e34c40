//! Response-based ranking reward.
//!
//! For every generation `i` of a sample and every score dimension, all
//! triplets of valid generations containing `i` are enumerated. Each triplet
//! has an L1 stabilizer (its median); the anchor's affinity to it is
//! `exp(-gamma * |s_i - median|)`. The local alignment coefficient is the
//! mean affinity over triplets and the response reward the mean over
//! dimensions.

use super::RewardError;
use crate::types::{SampleGroup, ScoreVector};

/// Three distinct generation indices within one sample, sorted ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletIndex([usize; 3]);

impl TripletIndex {
    pub fn new(a: usize, b: usize, c: usize) -> Option<Self> {
        let mut members = [a, b, c];
        members.sort_unstable();
        (members[0] < members[1] && members[1] < members[2]).then_some(TripletIndex(members))
    }

    pub fn members(&self) -> [usize; 3] {
        self.0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }
}

/// All triplets drawn from `pool` that contain `anchor`. `pool` must contain
/// `anchor` and have no duplicates.
pub fn triplets_containing(anchor: usize, pool: &[usize]) -> Vec<TripletIndex> {
    let others: Vec<usize> = pool.iter().copied().filter(|&i| i != anchor).collect();
    let mut out = Vec::with_capacity(others.len() * others.len().saturating_sub(1) / 2);
    for (a, &m) in others.iter().enumerate() {
        for &n in &others[a + 1..] {
            out.extend(TripletIndex::new(anchor, m, n));
        }
    }
    out
}

/// The L1 minimizer of three scalars, i.e. their median.
pub fn triplet_stabilizer(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

fn checked_anchor(group: &SampleGroup, gen_index: usize) -> Result<&ScoreVector, RewardError> {
    group
        .generations()
        .get(gen_index)
        .and_then(|g| g.scores())
        .ok_or(RewardError::InvalidGeneration(gen_index))
}

fn alignment_over(
    group: &SampleGroup,
    gen_index: usize,
    dim: usize,
    gamma: f64,
    triplets: &[TripletIndex],
) -> f64 {
    let score = |i: usize| {
        group.generations()[i].scores().expect("triplet members are valid").get(dim)
    };
    let anchor = score(gen_index);
    let total: f64 = triplets
        .iter()
        .map(|t| {
            let [a, b, c] = t.members();
            let median = triplet_stabilizer(score(a), score(b), score(c));
            (-gamma * (anchor - median).abs()).exp()
        })
        .sum();
    total / triplets.len() as f64
}

/// Mean triplet affinity of generation `gen_index` on dimension `dim`,
/// in `(0, 1]`. Malformed generations never enter a triplet.
pub fn local_alignment(
    group: &SampleGroup,
    gen_index: usize,
    dim: usize,
    gamma: f64,
) -> Result<f64, RewardError> {
    let scores = checked_anchor(group, gen_index)?;
    if dim >= scores.dims() {
        return Err(RewardError::DimOutOfRange { dim, dims: scores.dims() });
    }
    let valid = group.valid_indices();
    if valid.len() < 3 {
        return Err(RewardError::TooFewGenerations(valid.len()));
    }
    let triplets = triplets_containing(gen_index, &valid);
    Ok(alignment_over(group, gen_index, dim, gamma, &triplets))
}

/// Response reward: the mean of [`local_alignment`] over the `dims` score
/// dimensions.
pub fn response_reward(
    group: &SampleGroup,
    gen_index: usize,
    gamma: f64,
    dims: usize,
) -> Result<f64, RewardError> {
    let scores = checked_anchor(group, gen_index)?;
    if dims != scores.dims() {
        return Err(RewardError::DimOutOfRange { dim: dims, dims: scores.dims() });
    }
    let valid = group.valid_indices();
    if valid.len() < 3 {
        return Err(RewardError::TooFewGenerations(valid.len()));
    }
    let triplets = triplets_containing(gen_index, &valid);
    let sum: f64 = (0..dims).map(|d| alignment_over(group, gen_index, d, gamma, &triplets)).sum();
    Ok(sum / dims as f64)
}

/// Exploration-stage penalty on low dimension-wise spread:
/// `lambda_std * (delta_min - sigma)` when `sigma < delta_min`, else 0.
/// Always non-negative; subtracted from the total reward.
pub fn std_penalty(scores: &ScoreVector, delta_min: f64, lambda_std: f64) -> f64 {
    let sigma = scores.std();
    if sigma < delta_min {
        lambda_std * (delta_min - sigma)
    } else {
        0.0
    }
}
