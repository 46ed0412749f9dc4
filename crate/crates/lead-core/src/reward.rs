//! Correctness and length-efficiency rewards with per-prompt online target
//! calibration.
//!
//! For each prompt the target length `L*` is estimated from the current
//! group's own correct rollouts (mean by default; min / median / mean-of-all
//! variants are selectable) and clamped to `[l_min, b_max]`. When a
//! correctness-filtered aggregator finds no correct rollout, the target falls
//! back to the sentinel `b_max`, under which the symmetric reward reduces to
//! `len / b_max` and group normalization puts the longest rollouts at a
//! positive efficiency advantage.
//!
//! The efficiency reward itself is a tent function peaking at the target:
//!
//!   r_len = max(-1, 1 - |len - L*| / L*)
//!
//! so both overthinking and over-compression are penalized. A plain global
//! budget reward `min(0, 1 - len / B)` is provided as the static baseline.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-prompt target length is aggregated from the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Mean length of the correct rollouts (the default).
    MeanOfCorrect,
    /// Shortest correct rollout.
    MinOfCorrect,
    /// Median of the correct rollouts; even-sized sets use the midpoint of
    /// the two central values.
    MedianOfCorrect,
    /// Mean over all rollouts regardless of correctness (the unfiltered
    /// baseline). Never falls back to the sentinel.
    MeanOfAll,
}

impl Aggregator {
    /// Whether this aggregator filters on correctness (and therefore uses the
    /// `b_max` sentinel when the group has no correct rollout).
    pub fn filters_on_correctness(self) -> bool {
        !matches!(self, Aggregator::MeanOfAll)
    }
}

/// Target-length calibration policy: aggregator choice plus the permissible
/// target range.
///
/// `b_max` doubles as the upper clamp and as the sentinel target assigned to
/// prompts with no correct rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLengthPolicy {
    pub aggregator: Aggregator,
    /// Lower clamp; keeps the reward well-conditioned for very short
    /// solutions.
    pub l_min: u32,
    /// Upper clamp, maximum response length, and unsolved-prompt sentinel.
    pub b_max: u32,
}

impl Default for TargetLengthPolicy {
    fn default() -> Self {
        TargetLengthPolicy {
            aggregator: Aggregator::MeanOfCorrect,
            l_min: 1000,
            b_max: 4000,
        }
    }
}

impl TargetLengthPolicy {
    /// Check the `0 < l_min <= b_max` invariant.
    pub fn validate(&self) -> Result<()> {
        if self.l_min == 0 || self.l_min > self.b_max {
            return Err(Error::InvalidConfig("requires 0 < l_min <= b_max"));
        }
        Ok(())
    }
}

/// Per-rollout reward pair: binary correctness and clipped efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    /// Binary correctness reward, exactly 0 or 1.
    pub r_correct: f64,
    /// Length-efficiency reward in [-1, 1].
    pub r_length: f64,
}

fn check_lengths(lengths: &[u32], correct: &[bool]) -> Result<()> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput("rollout group"));
    }
    if lengths.len() != correct.len() {
        return Err(Error::LengthMismatch {
            what: "lengths vs correctness flags",
            left: lengths.len(),
            right: correct.len(),
        });
    }
    if lengths.iter().any(|&l| l == 0) {
        return Err(Error::NonPositiveLength);
    }
    Ok(())
}

/// Aggregate the selected lengths without clamping.
///
/// Returns `None` when the aggregator filters on correctness and the group
/// has no correct rollout.
pub fn aggregate_lengths(lengths: &[u32], correct: &[bool], aggregator: Aggregator) -> Option<f64> {
    let selected: Vec<u32> = if aggregator.filters_on_correctness() {
        lengths
            .iter()
            .zip(correct)
            .filter(|(_, &c)| c)
            .map(|(&l, _)| l)
            .collect()
    } else {
        lengths.to_vec()
    };
    if selected.is_empty() {
        return None;
    }
    let value = match aggregator {
        Aggregator::MeanOfCorrect | Aggregator::MeanOfAll => {
            selected.iter().map(|&l| l as f64).sum::<f64>() / selected.len() as f64
        }
        Aggregator::MinOfCorrect => *selected.iter().min().unwrap() as f64,
        Aggregator::MedianOfCorrect => {
            let mut sorted = selected;
            sorted.sort_unstable();
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2] as f64
            } else {
                (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
            }
        }
    };
    Some(value)
}

/// Calibrate the per-prompt target length from one group of rollouts.
///
/// Applies the policy's aggregator to the selected lengths and clamps the
/// result to `[l_min, b_max]`. Correctness-filtered aggregators return the
/// sentinel `b_max` when the group has no correct rollout.
pub fn calibrate_target(
    lengths: &[u32],
    correct: &[bool],
    policy: &TargetLengthPolicy,
) -> Result<f64> {
    policy.validate()?;
    check_lengths(lengths, correct)?;
    match aggregate_lengths(lengths, correct, policy.aggregator) {
        Some(raw) => Ok(raw.clamp(policy.l_min as f64, policy.b_max as f64)),
        None => Ok(policy.b_max as f64),
    }
}

/// Length-efficiency reward, symmetric around the target:
/// `max(-1, 1 - |len - target| / target)`.
///
/// Equals 1 exactly at `len == target` and decays linearly with absolute
/// deviation until the clip floor at -1. With the sentinel target `b_max`
/// this reduces to `len / b_max` exactly for any `len <= b_max`.
pub fn symmetric_efficiency_reward(length: u32, target: f64) -> Result<f64> {
    if length == 0 {
        return Err(Error::NonPositiveLength);
    }
    if !(target > 0.0) {
        return Err(Error::ZeroTarget);
    }
    let deviation = (length as f64 - target).abs();
    // (target - dev) / target rather than 1 - dev/target: for integer-valued
    // inputs below the target the numerator reconstructs `length` exactly,
    // which makes the sentinel identity r = len/b_max hold bit for bit.
    Ok(((target - deviation) / target).max(-1.0))
}

/// Global-budget baseline reward: `min(0, 1 - len / budget)`.
///
/// No reward for staying under budget, linear penalty beyond it; the static
/// scheme the per-prompt target calibration replaces.
pub fn global_budget_reward(length: u32, budget: u32) -> Result<f64> {
    if budget == 0 {
        return Err(Error::ZeroTarget);
    }
    Ok((1.0 - length as f64 / budget as f64).min(0.0))
}

/// Calibrate the group's target and score every rollout against it.
///
/// The efficiency reward is computed for all rollouts, correct or not, using
/// the single per-prompt target; an incorrect rollout near the target still
/// receives a high efficiency reward (the correctness channel is what
/// penalizes it).
pub fn score_group(
    lengths: &[u32],
    correct: &[bool],
    policy: &TargetLengthPolicy,
) -> Result<(f64, Vec<RewardVector>)> {
    let target = calibrate_target(lengths, correct, policy)?;
    let rewards = lengths
        .iter()
        .zip(correct)
        .map(|(&len, &c)| {
            Ok(RewardVector {
                r_correct: if c { 1.0 } else { 0.0 },
                r_length: symmetric_efficiency_reward(len, target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((target, rewards))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(aggregator: Aggregator) -> TargetLengthPolicy {
        TargetLengthPolicy {
            aggregator,
            l_min: 1000,
            b_max: 4000,
        }
    }

    #[test]
    fn mean_of_correct_plain() {
        let t = calibrate_target(
            &[1200, 1800],
            &[true, true],
            &policy(Aggregator::MeanOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 1500.0);
    }

    #[test]
    fn sentinel_when_nothing_correct() {
        for agg in [
            Aggregator::MeanOfCorrect,
            Aggregator::MinOfCorrect,
            Aggregator::MedianOfCorrect,
        ] {
            let t = calibrate_target(&[900, 2500, 3100], &[false, false, false], &policy(agg))
                .unwrap();
            assert_eq!(t, 4000.0);
        }
    }

    #[test]
    fn mean_of_all_ignores_mask() {
        let t = calibrate_target(
            &[1000, 3000],
            &[false, false],
            &policy(Aggregator::MeanOfAll),
        )
        .unwrap();
        assert_eq!(t, 2000.0);
    }

    #[test]
    fn lower_clamp() {
        let t = calibrate_target(
            &[300, 500],
            &[true, true],
            &policy(Aggregator::MeanOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 1000.0);
    }

    #[test]
    fn min_of_correct() {
        let t = calibrate_target(
            &[1200, 1800],
            &[true, true],
            &policy(Aggregator::MinOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 1200.0);
    }

    #[test]
    fn median_even_set_uses_midpoint() {
        let t = calibrate_target(
            &[1200, 1800, 2600, 3000],
            &[true, true, true, false],
            &policy(Aggregator::MedianOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 1800.0);
        let t = calibrate_target(
            &[1200, 1800, 2600, 3000],
            &[true, true, true, true],
            &policy(Aggregator::MedianOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 2200.0);
    }

    #[test]
    fn single_correct_rollout_sets_target() {
        let t = calibrate_target(
            &[2400, 900, 3900],
            &[false, true, false],
            &policy(Aggregator::MeanOfCorrect),
        )
        .unwrap();
        assert_eq!(t, 1000.0); // 900 clamped up to l_min
    }

    #[test]
    fn calibrate_errors() {
        let p = policy(Aggregator::MeanOfCorrect);
        assert_eq!(
            calibrate_target(&[], &[], &p),
            Err(Error::EmptyInput("rollout group"))
        );
        assert_eq!(
            calibrate_target(&[0, 100], &[true, true], &p),
            Err(Error::NonPositiveLength)
        );
        let bad = TargetLengthPolicy {
            aggregator: Aggregator::MeanOfCorrect,
            l_min: 5000,
            b_max: 4000,
        };
        assert!(calibrate_target(&[1000], &[true], &bad).is_err());
    }

    #[test]
    fn symmetric_reward_examples() {
        assert_eq!(symmetric_efficiency_reward(2000, 2000.0).unwrap(), 1.0);
        assert_eq!(symmetric_efficiency_reward(3000, 2000.0).unwrap(), 0.5);
        assert_eq!(symmetric_efficiency_reward(7000, 2000.0).unwrap(), -1.0);
        // Sentinel identity: with target b_max the reward is len/b_max.
        assert_eq!(symmetric_efficiency_reward(1000, 4000.0).unwrap(), 0.25);
    }

    #[test]
    fn symmetric_reward_errors() {
        assert_eq!(
            symmetric_efficiency_reward(100, 0.0),
            Err(Error::ZeroTarget)
        );
        assert_eq!(
            symmetric_efficiency_reward(0, 1000.0),
            Err(Error::NonPositiveLength)
        );
    }

    #[test]
    fn global_budget_examples() {
        assert_eq!(global_budget_reward(500, 1000).unwrap(), 0.0);
        assert_eq!(global_budget_reward(2000, 1000).unwrap(), -1.0);
        assert_eq!(global_budget_reward(1000, 1000).unwrap(), 0.0);
        assert_eq!(global_budget_reward(100, 0), Err(Error::ZeroTarget));
    }

    #[test]
    fn score_group_scores_all_rollouts_against_one_target() {
        let p = policy(Aggregator::MeanOfCorrect);
        let (target, rewards) = score_group(&[1200, 1800], &[true, true], &p).unwrap();
        assert_eq!(target, 1500.0);
        for r in &rewards {
            assert_eq!(r.r_correct, 1.0);
            assert!((r.r_length - 0.8).abs() < 1e-12);
        }

        // The incorrect rollout still receives an efficiency reward.
        let (target, rewards) = score_group(&[1500, 3000], &[true, false], &p).unwrap();
        assert_eq!(target, 1500.0);
        assert_eq!(rewards[0].r_length, 1.0);
        assert_eq!(rewards[1].r_length, 0.0);
        assert_eq!(rewards[1].r_correct, 0.0);
    }

    #[test]
    fn score_group_sentinel_branch_is_len_over_bmax() {
        let p = policy(Aggregator::MeanOfCorrect);
        let (target, rewards) =
            score_group(&[1000, 2000, 4000], &[false, false, false], &p).unwrap();
        assert_eq!(target, 4000.0);
        let got: Vec<f64> = rewards.iter().map(|r| r.r_length).collect();
        assert_eq!(got, [0.25, 0.5, 1.0]);
    }
}
