//! Group-relative advantage computation.
//!
//! Two routes are implemented:
//!
//! - Scalarized (combine-then-normalize): rewards are first merged into one
//!   scalar per rollout and the group z-score is taken afterwards,
//!
//!     A_j = (r_j - mean(r)) / (std(r) + eps).
//!
//!   In a group where every rollout is correct (or every rollout is
//!   incorrect), the static trade-off weight cancels between numerator and
//!   denominator, so the length signal drives the gradient at full
//!   normalized magnitude no matter how small its weight was. This collapse
//!   is what the decoupled route removes.
//!
//! - Decoupled (normalize-then-combine): each reward channel is z-scored
//!   within its own group first, then combined under an explicit weight
//!   vector and whitened across the whole rollout batch,
//!
//!     A_tilde = w_c * A_correct + w_len * A_length,
//!     A = (A_tilde - batch_mean) / (batch_std + eps).
//!
//! Group statistics use the population standard deviation throughout. A
//! bitwise-constant reward group yields all-zero advantages: a group with no
//! reward variation carries no preference signal.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardVector;
use crate::stats;

/// One prompt's group of G sampled rollouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    /// Index of the prompt in the environment (also the policy row).
    pub prompt_id: usize,
    /// Sampled response length per rollout, in tokens.
    pub lengths: Vec<u32>,
    /// Correctness flag per rollout, as judged by the environment.
    pub correct: Vec<bool>,
    /// Length-bin index chosen by the policy for each rollout.
    pub bin_indices: Vec<usize>,
    /// Log-probability of each rollout under the sampling (old) policy.
    pub logprob_old: Vec<f64>,
    /// Per-rollout rewards, filled in by reward scoring.
    pub rewards: Vec<RewardVector>,
}

impl RolloutGroup {
    /// Number of rollouts in the group.
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Indices of the correct rollouts.
    pub fn correct_indices(&self) -> Vec<usize> {
        self.correct
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Per-rollout normalized advantages, one vector per reward channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdvantageChannels {
    /// Correctness-channel advantages.
    pub a_correct: Vec<f64>,
    /// Efficiency-channel advantages.
    pub a_length: Vec<f64>,
    /// Combined, batch-whitened advantage; empty until
    /// [`combine_and_whiten`] runs.
    pub a_combined: Vec<f64>,
}

/// Group z-score: `(r - mean) / (pop_std + epsilon)`.
///
/// A bitwise-constant group returns all zeros, which is also the limit of the
/// epsilon-regularized form as the variance vanishes.
pub fn scalarized_advantage(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    if stats::all_equal(rewards) {
        return vec![0.0; rewards.len()];
    }
    let mu = stats::mean(rewards);
    let sigma = stats::population_std(rewards);
    if sigma == 0.0 && epsilon == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mu) / (sigma + epsilon)).collect()
}

/// Normalize each reward channel within its own group.
///
/// Both channels use the statistics of the full group of G rollouts; the
/// correctness-restricted masking applies only to the controller's batch
/// statistics, never to per-rollout advantages.
pub fn decoupled_advantages(group: &RolloutGroup, epsilon: f64) -> AdvantageChannels {
    let r_correct: Vec<f64> = group.rewards.iter().map(|r| r.r_correct).collect();
    let r_length: Vec<f64> = group.rewards.iter().map(|r| r.r_length).collect();
    AdvantageChannels {
        a_correct: scalarized_advantage(&r_correct, epsilon),
        a_length: scalarized_advantage(&r_length, epsilon),
        a_combined: Vec::new(),
    }
}

/// Combine the two channels under `(w_correct, w_length)` and whiten across
/// the whole batch, filling `a_combined` for every group.
///
/// The whitening statistics are the mean and population std over all rollouts
/// of all prompts (rollout-level, not token-level). The reduction is a
/// sequential two-pass over the fixed group order, so results are
/// deterministic for a given batch ordering.
pub fn combine_and_whiten(
    batch: &mut [AdvantageChannels],
    weights: (f64, f64),
    epsilon: f64,
) -> Result<()> {
    let (w_correct, w_length) = weights;
    let mut combined: Vec<f64> = Vec::new();
    for channels in batch.iter() {
        if channels.a_correct.len() != channels.a_length.len() {
            return Err(Error::LengthMismatch {
                what: "advantage channels",
                left: channels.a_correct.len(),
                right: channels.a_length.len(),
            });
        }
        for (ac, al) in channels.a_correct.iter().zip(&channels.a_length) {
            combined.push(w_correct * ac + w_length * al);
        }
    }
    if combined.is_empty() {
        return Err(Error::EmptyInput("advantage batch"));
    }
    let whitened = scalarized_advantage(&combined, epsilon);
    let mut offset = 0;
    for channels in batch.iter_mut() {
        let n = channels.a_correct.len();
        channels.a_combined = whitened[offset..offset + n].to_vec();
        offset += n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardVector;

    fn group_with(rewards: Vec<(f64, f64)>) -> RolloutGroup {
        let n = rewards.len();
        RolloutGroup {
            prompt_id: 0,
            lengths: vec![1000; n],
            correct: rewards.iter().map(|&(c, _)| c > 0.5).collect(),
            bin_indices: vec![0; n],
            logprob_old: vec![0.0; n],
            rewards: rewards
                .into_iter()
                .map(|(r_correct, r_length)| RewardVector { r_correct, r_length })
                .collect(),
        }
    }

    #[test]
    fn scalarized_binary_group() {
        let a = scalarized_advantage(&[1.0, 1.0, 0.0, 0.0], 0.0);
        assert_eq!(a, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn scalarized_constant_group_is_zero() {
        assert_eq!(scalarized_advantage(&[0.7, 0.7, 0.7], 1e-8), vec![0.0; 3]);
        assert_eq!(scalarized_advantage(&[0.7, 0.7, 0.7], 0.0), vec![0.0; 3]);
    }

    #[test]
    fn scalarized_collapse_under_static_weights() {
        // All-correct group: the combined reward is w_c + w_len * r_len, and
        // the z-score is identical whatever w_len > 0 is.
        let r_len = [0.9, 0.5];
        let combine = |w_c: f64, w_len: f64| -> Vec<f64> {
            r_len.iter().map(|r| w_c + w_len * r).collect()
        };
        let a_small = scalarized_advantage(&combine(1.0, 0.01), 0.0);
        let a_unit = scalarized_advantage(&combine(1.0, 1.0), 0.0);
        for (x, y) in a_small.iter().zip(&a_unit) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((a_unit[0] - 1.0).abs() < 1e-12);
        assert!((a_unit[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_separates_channels() {
        let g = group_with(vec![(1.0, 0.5), (0.0, 0.5)]);
        let ch = decoupled_advantages(&g, 0.0);
        assert_eq!(ch.a_correct, vec![1.0, -1.0]);
        assert_eq!(ch.a_length, vec![0.0, 0.0]);

        let g = group_with(vec![(1.0, 0.9), (1.0, 0.5)]);
        let ch = decoupled_advantages(&g, 0.0);
        assert_eq!(ch.a_correct, vec![0.0, 0.0]);
        assert!((ch.a_length[0] - 1.0).abs() < 1e-12);
        assert!((ch.a_length[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_matches_hand_oracle() {
        // correctness {1,0,0,1}, efficiency {1.0, 0.2, 0.6, 0.2}:
        // eff mean 0.5, pop std sqrt(0.11).
        let g = group_with(vec![(1.0, 1.0), (0.0, 0.2), (0.0, 0.6), (1.0, 0.2)]);
        let ch = decoupled_advantages(&g, 0.0);
        assert_eq!(ch.a_correct, vec![1.0, -1.0, -1.0, 1.0]);
        let expected = [1.5076, -0.9045, 0.3015, -0.9045];
        for (got, want) in ch.a_length.iter().zip(expected) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn whiten_single_group_identity() {
        let mut batch = vec![AdvantageChannels {
            a_correct: vec![1.0, -1.0],
            a_length: vec![0.0, 0.0],
            a_combined: Vec::new(),
        }];
        combine_and_whiten(&mut batch, (1.0, 0.0), 0.0).unwrap();
        assert_eq!(batch[0].a_combined, vec![1.0, -1.0]);
    }

    #[test]
    fn whiten_degenerate_batch_is_zero() {
        let mut batch = vec![AdvantageChannels {
            a_correct: vec![0.3, 0.3],
            a_length: vec![0.3, 0.3],
            a_combined: Vec::new(),
        }];
        combine_and_whiten(&mut batch, (0.5, 0.5), 1e-8).unwrap();
        assert_eq!(batch[0].a_combined, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_length_weight_ignores_length_channel() {
        let make = |scale: f64| {
            vec![
                AdvantageChannels {
                    a_correct: vec![1.0, -1.0],
                    a_length: vec![2.0 * scale, -0.5 * scale],
                    a_combined: Vec::new(),
                },
                AdvantageChannels {
                    a_correct: vec![0.5, -0.5],
                    a_length: vec![-1.0 * scale, 3.0 * scale],
                    a_combined: Vec::new(),
                },
            ]
        };
        let mut a = make(1.0);
        let mut b = make(1000.0);
        combine_and_whiten(&mut a, (1.0, 0.0), 0.0).unwrap();
        combine_and_whiten(&mut b, (1.0, 0.0), 0.0).unwrap();
        for (ga, gb) in a.iter().zip(&b) {
            assert_eq!(ga.a_combined, gb.a_combined);
        }
    }

    #[test]
    fn whiten_empty_batch_errors() {
        let mut batch: Vec<AdvantageChannels> = Vec::new();
        assert!(combine_and_whiten(&mut batch, (0.5, 0.5), 0.0).is_err());
    }
}
