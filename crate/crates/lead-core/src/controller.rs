//! Dynamic reward weighting via potential-scaled instability (PSI).
//!
//! At each training step the controller looks at two batch-level statistics
//! per reward channel:
//!
//! - instability, the coefficient of variation CV = sigma / (|mu| + eps),
//!   where (mu, sigma) come from the law of total variance over the batch:
//!   mu is the mean of per-prompt means and sigma^2 is the mean of per-prompt
//!   variances plus the variance of per-prompt means;
//! - potential, the normalized headroom to the reward ceiling,
//!   P = (1 - (mu - r_min) / (r_max - r_min))^alpha.
//!
//! Their product (after normalizing CVs across channels to sum to one) is the
//! PSI score: large when a reward is still noisy and far from its ceiling,
//! small when it has stabilized or saturated. PSI scores are normalized into
//! target weights and EMA-smoothed; a floor on the correctness weight
//! prevents a transiently stable batch from silencing correctness entirely.
//!
//! For the efficiency channel, the per-prompt statistics feeding the batch
//! reduction are restricted to correct rollouts, and prompts with no correct
//! rollout are dropped (their efficiency rewards carry no signal about
//! target tracking). This masking affects only the controller; per-rollout
//! advantages always use the full group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Inclusive reward range of one channel, used for headroom computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRange {
    pub min: f64,
    pub max: f64,
}

impl RewardRange {
    /// Correctness rewards live in [0, 1].
    pub const CORRECTNESS: RewardRange = RewardRange { min: 0.0, max: 1.0 };
    /// The symmetric efficiency reward lives in [-1, 1].
    pub const EFFICIENCY: RewardRange = RewardRange { min: -1.0, max: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.min < self.max) {
            return Err(Error::InvalidConfig("reward range requires min < max"));
        }
        Ok(())
    }
}

/// Controller hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Potential decay exponent.
    pub alpha: f64,
    /// EMA smoothing factor for the weight vector.
    pub beta_ema: f64,
    /// Numerical regularizer used in every guarded division.
    pub epsilon: f64,
    /// Floor on the correctness weight, applied after the EMA.
    pub lambda_min: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            alpha: 1.0,
            beta_ema: 0.95,
            epsilon: 1e-8,
            lambda_min: 0.3,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta_ema) {
            return Err(Error::InvalidConfig("beta_ema must be in [0, 1)"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig("epsilon must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.lambda_min) {
            return Err(Error::InvalidConfig("lambda_min must be in [0, 1]"));
        }
        Ok(())
    }
}

/// The controller's cross-step state: the smoothed weight vector.
///
/// This pair of scalars is the only state the dynamic weighting adds on top
/// of plain group-normalized training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Correctness weight.
    pub lambda_correct: f64,
    /// Efficiency weight; together they sum to 1.
    pub lambda_length: f64,
    /// Number of EMA updates applied so far.
    pub step: u64,
    pub config: ControllerConfig,
}

impl ControllerState {
    /// Fresh state at the uniform initialization (0.5, 0.5).
    pub fn new(config: ControllerConfig) -> Self {
        ControllerState {
            lambda_correct: 0.5,
            lambda_length: 0.5,
            step: 0,
            config,
        }
    }

    /// Current weight pair.
    pub fn weights(&self) -> (f64, f64) {
        (self.lambda_correct, self.lambda_length)
    }

    /// EMA-smooth the state toward `target`, then enforce the correctness
    /// floor (in that order) and advance the step counter.
    pub fn ema_update(&mut self, target: (f64, f64)) {
        let beta = self.config.beta_ema;
        self.lambda_correct = beta * self.lambda_correct + (1.0 - beta) * target.0;
        self.lambda_length = beta * self.lambda_length + (1.0 - beta) * target.1;
        if self.lambda_correct < self.config.lambda_min {
            self.lambda_correct = self.config.lambda_min;
            self.lambda_length = 1.0 - self.config.lambda_min;
        }
        self.step += 1;
    }
}

/// Per-prompt reward statistics entering the batch reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptChannelStat {
    /// Per-prompt reward mean (over the channel's eligible rollouts).
    pub mu: f64,
    /// Per-prompt population std (0 for a single eligible rollout).
    pub sigma: f64,
    /// Whether this prompt enters the batch reduction at all.
    pub eligible: bool,
}

/// Completed batch statistics for one reward channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBatchStats {
    /// Batch reward mean.
    pub mu: f64,
    /// Total batch reward std (within-prompt plus between-prompt).
    pub sigma: f64,
    /// Coefficient of variation.
    pub cv: f64,
    /// Headroom to the reward ceiling, in [0, 1].
    pub potential: f64,
    /// Potential-scaled instability; filled by [`psi_weights`].
    pub psi: f64,
    /// Number of prompts that entered the reduction.
    pub n_prompts_used: usize,
}

/// Law-of-total-variance batch mean and std over the eligible prompts.
///
/// Returns `None` when no prompt is eligible (a silent channel); the caller
/// decides what to do with a silent channel (the trainer freezes the weight
/// vector for that step).
pub fn batch_reward_stats(
    per_prompt: &[PromptChannelStat],
    epsilon: f64,
) -> Option<(f64, f64)> {
    let eligible: alloc::vec::Vec<&PromptChannelStat> =
        per_prompt.iter().filter(|s| s.eligible).collect();
    if eligible.is_empty() {
        return None;
    }
    let mus: alloc::vec::Vec<f64> = eligible.iter().map(|s| s.mu).collect();
    let mu = stats::mean(&mus);
    let mean_within_var =
        eligible.iter().map(|s| s.sigma * s.sigma).sum::<f64>() / eligible.len() as f64;
    let between_var = stats::population_variance(&mus);
    let sigma = libm::sqrt(mean_within_var + between_var + epsilon);
    Some((mu, sigma))
}

/// Instability of a reward relative to its magnitude:
/// `sigma / (|mu| + epsilon)`.
pub fn coefficient_of_variation(mu: f64, sigma: f64, epsilon: f64) -> f64 {
    sigma / (mu.abs() + epsilon)
}

/// Headroom to the reward ceiling:
/// `(1 - (mu - r_min) / (r_max - r_min))^alpha`.
///
/// `mu` may sit up to 1e-6 outside the range (float drift) and is clamped;
/// a larger violation is an upstream bug and returns an error.
pub fn potential(mu: f64, range: RewardRange, alpha: f64) -> Result<f64> {
    range.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig("alpha must be positive"));
    }
    const TOL: f64 = 1e-6;
    if mu < range.min - TOL || mu > range.max + TOL {
        return Err(Error::MeanOutOfRange {
            mu,
            min: range.min,
            max: range.max,
        });
    }
    let clamped = mu.clamp(range.min, range.max);
    let headroom = 1.0 - (clamped - range.min) / (range.max - range.min);
    Ok(libm::pow(headroom, alpha))
}

impl ChannelBatchStats {
    /// Reduce per-prompt statistics into batch statistics for one channel.
    ///
    /// Returns `Ok(None)` when the channel is silent (no eligible prompt).
    pub fn from_prompt_stats(
        per_prompt: &[PromptChannelStat],
        range: RewardRange,
        alpha: f64,
        epsilon: f64,
    ) -> Result<Option<Self>> {
        let Some((mu, sigma)) = batch_reward_stats(per_prompt, epsilon) else {
            return Ok(None);
        };
        Ok(Some(ChannelBatchStats {
            mu,
            sigma,
            cv: coefficient_of_variation(mu, sigma, epsilon),
            potential: potential(mu, range, alpha)?,
            psi: 0.0,
            n_prompts_used: per_prompt.iter().filter(|s| s.eligible).count(),
        }))
    }
}

/// Compute PSI for both channels and normalize into target weights.
///
/// CVs are first normalized to sum to one across channels, multiplied by the
/// potentials, and the resulting PSI scores are renormalized onto the weight
/// simplex. If both PSI scores vanish (every channel stable or saturated)
/// the target falls back to uniform weights, which leaves the EMA state
/// drifting toward initialization rather than off the simplex.
///
/// Fills the `psi` field of both stats and returns the (correctness, length)
/// target weight pair.
pub fn psi_weights(
    stats_correct: &mut ChannelBatchStats,
    stats_length: &mut ChannelBatchStats,
    epsilon: f64,
) -> (f64, f64) {
    let cv_sum = stats_correct.cv + stats_length.cv + epsilon;
    let (cv_t_correct, cv_t_length) = if cv_sum > 0.0 {
        (stats_correct.cv / cv_sum, stats_length.cv / cv_sum)
    } else {
        (0.0, 0.0)
    };
    stats_correct.psi = cv_t_correct * stats_correct.potential;
    stats_length.psi = cv_t_length * stats_length.potential;
    let total = stats_correct.psi + stats_length.psi;
    if total > 0.0 {
        (stats_correct.psi / total, stats_length.psi / total)
    } else {
        (0.5, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(mu: f64, sigma: f64) -> PromptChannelStat {
        PromptChannelStat {
            mu,
            sigma,
            eligible: true,
        }
    }

    #[test]
    fn batch_stats_single_prompt() {
        let (mu, sigma) = batch_reward_stats(&[stat(0.5, 0.5)], 0.0).unwrap();
        assert_eq!((mu, sigma), (0.5, 0.5));
    }

    #[test]
    fn batch_stats_total_variance() {
        // Within: mean(0.25, 0) = 0.125; between: var(0.5, 1.0) = 0.0625.
        let (mu, sigma) = batch_reward_stats(&[stat(0.5, 0.5), stat(1.0, 0.0)], 0.0).unwrap();
        assert_eq!(mu, 0.75);
        assert!((sigma - libm::sqrt(0.1875)).abs() < 1e-15);
        // Same as pooling the flattened equal-sized groups {0,1} and {1,1}.
        let pooled = crate::stats::population_std(&[0.0, 1.0, 1.0, 1.0]);
        assert!((sigma - pooled).abs() < 1e-12);
    }

    #[test]
    fn batch_stats_constant_rewards() {
        let (mu, sigma) = batch_reward_stats(&[stat(0.3, 0.0), stat(0.3, 0.0)], 0.0).unwrap();
        assert_eq!((mu, sigma), (0.3, 0.0));
    }

    #[test]
    fn batch_stats_silent_channel() {
        let silent = [PromptChannelStat {
            mu: 0.5,
            sigma: 0.1,
            eligible: false,
        }];
        assert_eq!(batch_reward_stats(&silent, 0.0), None);
        assert_eq!(batch_reward_stats(&[], 0.0), None);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(1.0, 0.5, 0.0), 0.5);
        assert_eq!(coefficient_of_variation(0.0, 0.3, 1e-8), 3e7);
        assert_eq!(coefficient_of_variation(-0.5, 0.25, 0.0), 0.5);
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential(1.0, RewardRange::CORRECTNESS, 1.0).unwrap(), 0.0);
        assert_eq!(potential(0.0, RewardRange::EFFICIENCY, 1.0).unwrap(), 0.5);
        assert_eq!(potential(0.5, RewardRange::CORRECTNESS, 2.0).unwrap(), 0.25);
    }

    #[test]
    fn potential_boundary_and_errors() {
        assert_eq!(potential(0.0, RewardRange::CORRECTNESS, 3.7).unwrap(), 1.0);
        assert_eq!(potential(1.0, RewardRange::CORRECTNESS, 0.5).unwrap(), 0.0);
        // Marginal drift is clamped; larger violations error out.
        assert_eq!(
            potential(1.0 + 5e-7, RewardRange::CORRECTNESS, 1.0).unwrap(),
            0.0
        );
        assert!(potential(1.1, RewardRange::CORRECTNESS, 1.0).is_err());
        assert!(potential(0.5, RewardRange::CORRECTNESS, 0.0).is_err());
    }

    fn mk_stats(cv: f64, pot: f64) -> ChannelBatchStats {
        ChannelBatchStats {
            mu: 0.0,
            sigma: 0.0,
            cv,
            potential: pot,
            psi: 0.0,
            n_prompts_used: 1,
        }
    }

    #[test]
    fn psi_symmetric_channels() {
        let mut c = mk_stats(0.2, 0.5);
        let mut l = mk_stats(0.2, 0.5);
        assert_eq!(psi_weights(&mut c, &mut l, 0.0), (0.5, 0.5));
    }

    #[test]
    fn psi_saturated_channel_gets_zero_weight() {
        let mut c = mk_stats(0.4, 0.0);
        let mut l = mk_stats(0.1, 0.3);
        let (wc, wl) = psi_weights(&mut c, &mut l, 0.0);
        assert_eq!((wc, wl), (0.0, 1.0));
    }

    #[test]
    fn psi_hand_oracle() {
        // CVs (0.4, 0.1), potentials (0.5, 0.5): normalized CVs (0.8, 0.2),
        // PSI (0.4, 0.1), weights (0.8, 0.2).
        let mut c = mk_stats(0.4, 0.5);
        let mut l = mk_stats(0.1, 0.5);
        let (wc, wl) = psi_weights(&mut c, &mut l, 0.0);
        assert!((c.psi - 0.4).abs() < 1e-15);
        assert!((l.psi - 0.1).abs() < 1e-15);
        assert!((wc - 0.8).abs() < 1e-12);
        assert!((wl - 0.2).abs() < 1e-12);
    }

    #[test]
    fn psi_degenerate_falls_back_to_uniform() {
        let mut c = mk_stats(0.0, 0.5);
        let mut l = mk_stats(0.0, 0.5);
        assert_eq!(psi_weights(&mut c, &mut l, 1e-8), (0.5, 0.5));
        let mut c = mk_stats(0.3, 0.0);
        let mut l = mk_stats(0.3, 0.0);
        assert_eq!(psi_weights(&mut c, &mut l, 1e-8), (0.5, 0.5));
    }

    #[test]
    fn ema_basic_step() {
        let mut state = ControllerState::new(ControllerConfig::default());
        state.ema_update((0.2, 0.8));
        assert!((state.lambda_correct - 0.485).abs() < 1e-12);
        assert!((state.lambda_length - 0.515).abs() < 1e-12);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn ema_floor_clips_and_renormalizes() {
        let mut state = ControllerState::new(ControllerConfig {
            beta_ema: 0.0,
            ..ControllerConfig::default()
        });
        state.ema_update((0.2, 0.8));
        assert_eq!(state.weights(), (0.3, 0.7));
        assert_eq!(state.lambda_correct + state.lambda_length, 1.0);
    }

    #[test]
    fn ema_fixed_point() {
        let mut state = ControllerState::new(ControllerConfig::default());
        let before = state.weights();
        state.ema_update(before);
        assert_eq!(state.weights(), before);
    }

    #[test]
    fn ema_keeps_simplex_over_many_steps() {
        let mut state = ControllerState::new(ControllerConfig::default());
        for t in 0..1000 {
            let x = 0.5 + 0.5 * libm::sin(t as f64);
            state.ema_update((x, 1.0 - x));
            let sum = state.lambda_correct + state.lambda_length;
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(state.lambda_correct >= state.config.lambda_min);
        }
    }
}
