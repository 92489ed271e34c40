//! Preference-based ranking-score rewards.
//!
//! Generations inside each sample are first sorted by their mean score so
//! that cross-sample comparisons happen between generations of equal rank.
//! Two samples are compared through a sign-consistency flag `C` and a
//! magnitude-aware alignment `M`; the pairwise reward is
//! `mean_m [ sqrt(C e^M) + sqrt((1 - C) e^-(1 + M)) ]`. The triplet reward
//! scores transitivity over sample triplets: 1.0 when all three pairs are
//! consistent, 0.3 otherwise.

use std::cmp::Ordering;

use super::RewardError;
use crate::types::SampleGroup;

/// Denominator guard of the magnitude-aware alignment.
pub const MAGNITUDE_EPS: f64 = 1e-8;

/// Triplet reward when every pair in the triplet is consistent.
pub const TRIPLET_CONSISTENT: f64 = 1.0;
/// Triplet reward otherwise.
pub const TRIPLET_INCONSISTENT: f64 = 0.3;

/// Sorts the valid generations of `group` by ascending mean score, breaking
/// ties by generation index. Malformed generations are left out.
pub fn rank_generations(group: &SampleGroup) -> Result<Vec<usize>, RewardError> {
    let mut keyed: Vec<(usize, f64)> = group
        .generations()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.mean_score().map(|m| (i, m)))
        .collect();
    if keyed.is_empty() {
        return Err(RewardError::NoValidGenerations(group.sample_id().to_string()));
    }
    keyed.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(keyed.into_iter().map(|(i, _)| i).collect())
}

/// A batch of samples with their intra-sample order statistics.
#[derive(Debug, Clone)]
pub struct RankedBatch {
    samples: Vec<SampleGroup>,
    order_stats: Vec<Vec<usize>>,
    ranked_means: Vec<Vec<f64>>,
}

impl RankedBatch {
    pub fn new(samples: Vec<SampleGroup>) -> Result<Self, RewardError> {
        let order_stats =
            samples.iter().map(rank_generations).collect::<Result<Vec<_>, _>>()?;
        let ranked_means = samples
            .iter()
            .zip(&order_stats)
            .map(|(s, order)| {
                order
                    .iter()
                    .map(|&i| s.generations()[i].mean_score().expect("ranked generations are valid"))
                    .collect()
            })
            .collect();
        Ok(RankedBatch { samples, order_stats, ranked_means })
    }

    pub fn samples(&self) -> &[SampleGroup] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `order_stats()[j][i]` is the generation index of sample `j`'s `i`-th
    /// ranked generation.
    pub fn order_stats(&self) -> &[Vec<usize>] {
        &self.order_stats
    }

    /// Mean score of sample `j`'s `i`-th order statistic, if it exists.
    pub fn ranked_mean(&self, sample: usize, rank: usize) -> Option<f64> {
        self.ranked_means.get(sample)?.get(rank).copied()
    }

    /// Rank of generation `gen` in sample `sample`, `None` if malformed.
    pub fn rank_of(&self, sample: usize, gen: usize) -> Option<usize> {
        self.order_stats.get(sample)?.iter().position(|&g| g == gen)
    }

    /// Ground-truth MOS of every sample, in batch order.
    pub fn ground_truth(&self) -> Vec<f64> {
        self.samples.iter().map(SampleGroup::mos).collect()
    }
}

fn sign(x: f64) -> Ordering {
    x.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
}

/// 1 when the predicted pair and the ground-truth pair are ordered the same
/// way (three-valued sign, so exact ties only match exact ties), else 0.
pub fn pair_consistency(s_l: f64, s_m: f64, g_l: f64, g_m: f64) -> u8 {
    u8::from(sign(s_l - s_m) == sign(g_l - g_m))
}

/// Ground-truth contrast divided by the predicted contrast plus both
/// prediction errors. Equals 1 at perfect calibration (as `eps -> 0`).
pub fn magnitude_alignment(s_l: f64, s_m: f64, g_l: f64, g_m: f64, eps: f64) -> f64 {
    (g_l - g_m).abs() / ((s_l - s_m).abs() + (s_l - g_l).abs() + (s_m - g_m).abs() + eps)
}

fn pair_term(c: u8, m: f64) -> f64 {
    let c = f64::from(c);
    (c * m.exp()).sqrt() + ((1.0 - c) * (-(1.0 + m)).exp()).sqrt()
}

fn check_inputs(batch: &RankedBatch, sample: usize, rank: usize, ground: &[f64]) -> Result<f64, RewardError> {
    if ground.len() != batch.len() {
        return Err(RewardError::GroundTruthMismatch { expected: batch.len(), got: ground.len() });
    }
    if sample >= batch.len() {
        return Err(RewardError::SampleOutOfRange(sample));
    }
    batch.ranked_mean(sample, rank).ok_or(RewardError::RankUnavailable { sample, rank })
}

/// Smooth pairwise comparative reward of sample `sample_l`'s `rank_i`-th
/// ranked generation against the equally-ranked generations of every other
/// sample. Samples without a generation at that rank are skipped and the
/// average is taken over the comparisons that exist (0 if none).
pub fn pairwise_reward(
    batch: &RankedBatch,
    sample_l: usize,
    rank_i: usize,
    ground: &[f64],
    eps: f64,
) -> Result<f64, RewardError> {
    let s_l = check_inputs(batch, sample_l, rank_i, ground)?;
    let g_l = ground[sample_l];
    let (mut sum, mut count) = (0.0, 0usize);
    for m in (0..batch.len()).filter(|&m| m != sample_l) {
        let Some(s_m) = batch.ranked_mean(m, rank_i) else { continue };
        let g_m = ground[m];
        let c = pair_consistency(s_l, s_m, g_l, g_m);
        let mag = magnitude_alignment(s_l, s_m, g_l, g_m, eps);
        sum += pair_term(c, mag);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// 1.0 if all three pairs are consistent, otherwise 0.3.
pub fn triplet_reward_single(c_lm: u8, c_ln: u8, c_mn: u8) -> f64 {
    if c_lm + c_ln + c_mn == 3 {
        TRIPLET_CONSISTENT
    } else {
        TRIPLET_INCONSISTENT
    }
}

/// Mean transitivity reward over all unordered triplets `(j, m, n)`,
/// `m < n`, anchored at sample `sample_j`, compared at rank `rank_i`.
/// Triplets with a member lacking that rank are skipped (0 if none remain).
pub fn triplet_reward(
    batch: &RankedBatch,
    sample_j: usize,
    rank_i: usize,
    ground: &[f64],
) -> Result<f64, RewardError> {
    if batch.len() < 3 {
        return Err(RewardError::BatchTooSmall(batch.len()));
    }
    let s_j = check_inputs(batch, sample_j, rank_i, ground)?;
    let others: Vec<(usize, f64)> = (0..batch.len())
        .filter(|&m| m != sample_j)
        .filter_map(|m| batch.ranked_mean(m, rank_i).map(|s| (m, s)))
        .collect();
    let g = |i: usize| ground[i];
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, &(m, s_m)) in others.iter().enumerate() {
        let c_jm = pair_consistency(s_j, s_m, g(sample_j), g(m));
        for &(n, s_n) in &others[a + 1..] {
            let c_jn = pair_consistency(s_j, s_n, g(sample_j), g(n));
            let c_mn = pair_consistency(s_m, s_n, g(m), g(n));
            sum += triplet_reward_single(c_jm, c_jn, c_mn);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Generation, ScoreVector};

    fn group(id: &str, mos: f64, means: &[f64]) -> SampleGroup {
        let gens = means
            .iter()
            .map(|&m| Generation::valid(ScoreVector::with_dims(&[m], 1).unwrap(), 0.0, 1, None).unwrap())
            .collect();
        SampleGroup::new(id, mos, None, gens).unwrap()
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_generations(&group("a", 3.0, &[3.0, 2.0, 4.0])).unwrap(), vec![1, 0, 2]);
        assert_eq!(rank_generations(&group("a", 3.0, &[2.0, 2.0])).unwrap(), vec![0, 1]);
        assert_eq!(
            rank_generations(&group("a", 3.0, &[5.0, 4.0, 3.0, 2.0, 1.0])).unwrap(),
            vec![4, 3, 2, 1, 0]
        );
    }

    #[test]
    fn ranking_skips_malformed() {
        let s = |v: f64| Generation::valid(ScoreVector::with_dims(&[v], 1).unwrap(), 0.0, 1, None).unwrap();
        let g = SampleGroup::new("a", 3.0, None, vec![s(4.0), Generation::malformed(None, 1), s(2.0)]).unwrap();
        assert_eq!(rank_generations(&g).unwrap(), vec![2, 0]);
        let bad = SampleGroup::new("b", 3.0, None, vec![Generation::malformed(None, 1)]).unwrap();
        assert!(matches!(rank_generations(&bad), Err(RewardError::NoValidGenerations(_))));
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(pair_consistency(4.0, 2.0, 4.5, 1.0), 1);
        assert_eq!(pair_consistency(2.0, 4.0, 4.5, 1.0), 0);
        assert_eq!(pair_consistency(3.0, 3.0, 3.0, 3.0), 1);
        assert_eq!(pair_consistency(3.0, 3.0, 3.5, 3.0), 0);
        assert_eq!(pair_consistency(3.1, 3.0, 3.0, 3.0), 0);
    }

    #[test]
    fn magnitude_examples() {
        assert!((magnitude_alignment(3.5, 2.5, 4.0, 2.0, 1e-15) - 1.0).abs() < 1e-12);
        assert!((magnitude_alignment(4.0, 2.0, 4.0, 2.0, 1e-15) - 1.0).abs() < 1e-12);
        assert_eq!(magnitude_alignment(3.0, 3.0, 3.0, 3.0, MAGNITUDE_EPS), 0.0);
    }

    #[test]
    fn pair_term_closed_forms() {
        assert!((pair_term(1, 1.0) - 0.5f64.exp()).abs() < 1e-15);
        assert!((pair_term(0, 0.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((pair_term(1, 1.0) - 1.648721).abs() < 1e-6);
        assert!((pair_term(0, 0.0) - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn pairwise_b2_and_b3() {
        // calibrated pair: C=1, M=1
        let batch = RankedBatch::new(vec![group("a", 4.0, &[4.0]), group("b", 2.0, &[2.0])]).unwrap();
        let r = pairwise_reward(&batch, 0, 0, &batch.ground_truth(), 1e-15).unwrap();
        assert!((r - 0.5f64.exp()).abs() < 1e-12);

        // a vs b calibrated (C=1, M=1); a vs c tied MOS with inverted prediction: C=0, M=0
        let batch = RankedBatch::new(vec![
            group("a", 4.0, &[4.0]),
            group("b", 2.0, &[2.0]),
            group("c", 4.0, &[4.5]),
        ])
        .unwrap();
        let r = pairwise_reward(&batch, 0, 0, &batch.ground_truth(), 1e-15).unwrap();
        assert!((r - (0.5f64.exp() + (-0.5f64).exp()) / 2.0).abs() < 1e-12);
        assert!((r - 1.127626).abs() < 1e-6);
    }

    #[test]
    fn pairwise_errors_and_unequal_counts() {
        let batch = RankedBatch::new(vec![
            group("a", 4.0, &[4.0, 4.1]),
            group("b", 2.0, &[2.0]),
            group("c", 3.0, &[3.0, 3.2]),
        ])
        .unwrap();
        let gt = batch.ground_truth();
        assert_eq!(
            pairwise_reward(&batch, 1, 1, &gt, MAGNITUDE_EPS),
            Err(RewardError::RankUnavailable { sample: 1, rank: 1 })
        );
        // rank 1 exists only for a and c: one comparison
        let r = pairwise_reward(&batch, 0, 1, &gt, 1e-15).unwrap();
        let m = magnitude_alignment(4.1, 3.2, 4.0, 3.0, 1e-15);
        assert!((r - (m / 2.0).exp()).abs() < 1e-12);
        assert!(matches!(
            pairwise_reward(&batch, 0, 0, &gt[..2], MAGNITUDE_EPS),
            Err(RewardError::GroundTruthMismatch { .. })
        ));
        assert!(matches!(triplet_reward(&batch, 0, 1, &gt), Ok(v) if v == 0.0));
    }

    #[test]
    fn triplet_single_values() {
        assert_eq!(triplet_reward_single(1, 1, 1), 1.0);
        assert_eq!(triplet_reward_single(1, 1, 0), 0.3);
        assert_eq!(triplet_reward_single(0, 0, 0), 0.3);
    }

    #[test]
    fn triplet_mean_over_anchor_triplets() {
        // anchor a; b and c ordered correctly, d inverted against everyone
        let batch = RankedBatch::new(vec![
            group("a", 3.0, &[3.0]),
            group("b", 2.0, &[2.0]),
            group("c", 4.0, &[4.0]),
            group("d", 1.5, &[4.8]),
        ])
        .unwrap();
        let gt = batch.ground_truth();
        // triplets (a,b,c)=1.0, (a,b,d)=0.3, (a,c,d)=0.3
        let r = triplet_reward(&batch, 0, 0, &gt).unwrap();
        assert!((r - 1.6 / 3.0).abs() < 1e-15);
        assert!((r - 0.533333).abs() < 1e-6);
        let two = RankedBatch::new(vec![group("a", 3.0, &[3.0]), group("b", 2.0, &[2.0])]).unwrap();
        assert_eq!(triplet_reward(&two, 0, 0, &two.ground_truth()), Err(RewardError::BatchTooSmall(2)));
    }
}
