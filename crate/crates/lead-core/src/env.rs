//! Synthetic reasoning environment.
//!
//! Each prompt carries a latent required reasoning length, a logistic
//! transition width, and a solve-probability ceiling. A rollout picks one of
//! the shared geometric length bins from the policy's categorical and is
//! judged correct with probability
//!
//!   p(correct | len) = ceiling * logistic((len - required_length) / steepness),
//!
//! so responses truncated below a prompt's budget mostly fail, success never
//! decreases with extra length, and harder prompts (larger budgets, lower
//! ceilings) stay stochastic even when solved. A configurable fraction of
//! prompts is unsolvable (ceiling 0, budget above the longest bin), which
//! exercises the unsolved-prompt sentinel path of target calibration.
//!
//! The population is generated deterministically from the root seed, graded
//! from easy (short budget, high ceiling) to hard, with unsolvable prompts
//! occupying the final indices.

use alloc::vec::Vec;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::advantage::RolloutGroup;
use crate::error::{Error, Result};
use crate::policy::ToyPolicyParams;
use crate::rng::{derive_stream, uniform_f64, STREAM_ENV};
use crate::stats::logistic;

/// One synthetic prompt with its latent difficulty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPrompt {
    pub prompt_id: usize,
    /// Latent reasoning budget in tokens.
    pub required_length: u32,
    /// Width of the logistic transition around the budget.
    pub steepness: f64,
    /// Maximum solve probability; 0 marks a designed-unsolvable prompt.
    pub ceiling: f64,
    /// The discrete lengths the policy can choose, strictly increasing.
    pub bin_lengths: Vec<u32>,
}

impl SyntheticPrompt {
    /// Whether this prompt can be solved at all.
    pub fn solvable(&self) -> bool {
        self.ceiling > 0.0
    }
}

/// Parameters of the difficulty gradient used by [`make_environment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifficultyDistribution {
    /// Reasoning budget of the easiest prompt.
    pub required_min: u32,
    /// Reasoning budget of the hardest solvable prompt.
    pub required_max: u32,
    /// Exponent shaping how budgets grow along the population: budgets
    /// interpolate geometrically from `required_min` to `required_max` with
    /// exponent `(i / (n-1))^difficulty_skew`, so values above 1 make most
    /// prompts easy with a hard frontier at the top.
    pub difficulty_skew: f64,
    /// Logistic width at the easy end.
    pub steepness_min: f64,
    /// Logistic width at the hard end.
    pub steepness_max: f64,
    /// Solve-probability ceiling at the easy end.
    pub ceiling_easy: f64,
    /// Solve-probability ceiling at the hard end.
    pub ceiling_hard: f64,
    /// Uniform jitter half-width applied to each ceiling.
    pub ceiling_jitter: f64,
    /// Fraction of prompts forming a hard frontier: budgets near the longest
    /// bin with reduced ceilings, so they start mostly unsolved and become
    /// solvable only once the policy allocates them long responses.
    pub frontier_fraction: f64,
    /// Budget range of the frontier band.
    pub frontier_required_min: u32,
    pub frontier_required_max: u32,
    /// Fraction of prompts generated as unsolvable (ceiling 0).
    pub unsolvable_fraction: f64,
    /// Nominal budget assigned to unsolvable prompts; must exceed the
    /// longest bin.
    pub unsolvable_required: u32,
}

impl Default for DifficultyDistribution {
    fn default() -> Self {
        DifficultyDistribution {
            required_min: 100,
            required_max: 2200,
            difficulty_skew: 3.5,
            steepness_min: 50.0,
            steepness_max: 180.0,
            ceiling_easy: 0.98,
            ceiling_hard: 0.45,
            ceiling_jitter: 0.02,
            frontier_fraction: 0.03,
            frontier_required_min: 3200,
            frontier_required_max: 3800,
            unsolvable_fraction: 0.04,
            unsolvable_required: 6000,
        }
    }
}

/// Environment shape: prompt count, bin grid, group size, and the root seed
/// all randomness derives from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentConfig {
    pub n_prompts: usize,
    pub n_length_bins: usize,
    /// Rollouts sampled per prompt per step (G).
    pub group_size: usize,
    /// Shortest length bin.
    pub bin_min: u32,
    /// Longest length bin; equals the training-time max response length.
    pub bin_max: u32,
    /// Root seed for environment generation, rollouts, and evaluation.
    pub seed: u64,
    pub difficulty: DifficultyDistribution,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            n_prompts: 100,
            n_length_bins: 10,
            group_size: 8,
            bin_min: 80,
            bin_max: 4000,
            seed: 42,
            difficulty: DifficultyDistribution::default(),
        }
    }
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_prompts < 1 {
            return Err(Error::InvalidConfig("n_prompts must be >= 1"));
        }
        if self.n_length_bins < 2 {
            return Err(Error::InvalidConfig("n_length_bins must be >= 2"));
        }
        if self.group_size < 2 {
            return Err(Error::InvalidConfig(
                "group_size must be >= 2 (group normalization needs variance)",
            ));
        }
        if self.bin_min == 0 || self.bin_min >= self.bin_max {
            return Err(Error::InvalidConfig("requires 0 < bin_min < bin_max"));
        }
        let d = &self.difficulty;
        if d.required_min < self.bin_min
            || d.required_max > self.bin_max
            || d.required_min > d.required_max
        {
            return Err(Error::InvalidConfig(
                "solvable budgets must lie within the bin range",
            ));
        }
        if !(d.steepness_min > 0.0) || d.steepness_min > d.steepness_max {
            return Err(Error::InvalidConfig("requires 0 < steepness_min <= steepness_max"));
        }
        if !(d.difficulty_skew > 0.0) {
            return Err(Error::InvalidConfig("difficulty_skew must be positive"));
        }
        if !(0.0..=1.0).contains(&d.ceiling_hard)
            || !(0.0..=1.0).contains(&d.ceiling_easy)
            || d.ceiling_hard <= 0.0
            || d.ceiling_easy <= 0.0
        {
            return Err(Error::InvalidConfig("ceilings must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&d.unsolvable_fraction)
            || !(0.0..=1.0).contains(&d.frontier_fraction)
            || d.unsolvable_fraction + d.frontier_fraction > 1.0
        {
            return Err(Error::InvalidConfig(
                "frontier and unsolvable fractions must lie in [0, 1] with sum <= 1",
            ));
        }
        if d.frontier_required_min < self.bin_min
            || d.frontier_required_max > self.bin_max
            || d.frontier_required_min > d.frontier_required_max
        {
            return Err(Error::InvalidConfig(
                "frontier budgets must lie within the bin range",
            ));
        }
        if d.unsolvable_required <= self.bin_max {
            return Err(Error::InvalidConfig(
                "unsolvable budgets must exceed the longest bin",
            ));
        }
        Ok(())
    }

    /// Geometrically spaced bin lengths from `bin_min` to `bin_max`, so the
    /// relative deviations of the symmetric reward are resolvable at both
    /// short and long scales.
    pub fn bin_lengths(&self) -> Result<Vec<u32>> {
        let n = self.n_length_bins;
        let ratio = libm::pow(
            self.bin_max as f64 / self.bin_min as f64,
            1.0 / (n - 1) as f64,
        );
        let mut bins = Vec::with_capacity(n);
        for i in 0..n {
            let len = if i == n - 1 {
                self.bin_max
            } else {
                libm::round(self.bin_min as f64 * libm::pow(ratio, i as f64)) as u32
            };
            bins.push(len);
        }
        if bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bin grid not strictly increasing; reduce n_length_bins",
            ));
        }
        Ok(bins)
    }
}

/// Probability that a response of `length` tokens solves the prompt.
pub fn success_probability(prompt: &SyntheticPrompt, length: u32) -> f64 {
    prompt.ceiling * logistic((length as f64 - prompt.required_length as f64) / prompt.steepness)
}

/// Deterministically generate the prompt population from the config's seed.
pub fn make_environment(config: &EnvironmentConfig) -> Result<Vec<SyntheticPrompt>> {
    config.validate()?;
    let bins = config.bin_lengths()?;
    let d = &config.difficulty;
    let n = config.n_prompts;
    let n_unsolvable = libm::floor(n as f64 * d.unsolvable_fraction + 0.5) as usize;
    let n_frontier = libm::floor(n as f64 * d.frontier_fraction + 0.5) as usize;
    let n_regular = n - n_unsolvable.min(n) - n_frontier.min(n - n_unsolvable.min(n));

    let mut rng = derive_stream(config.seed, &[STREAM_ENV]);
    let mut prompts = Vec::with_capacity(n);
    for i in 0..n_regular {
        let position = if n_regular > 1 {
            i as f64 / (n_regular - 1) as f64
        } else {
            0.0
        };
        let frac = libm::pow(position, d.difficulty_skew);
        // Budgets grow geometrically with difficulty (token scales are
        // multiplicative), with a small relative jitter.
        let geometric = d.required_min as f64
            * libm::pow(d.required_max as f64 / d.required_min as f64, frac);
        let jitter = 1.0 + (uniform_f64(&mut rng) - 0.5) * 0.06;
        let required = (geometric * jitter)
            .clamp(d.required_min as f64, d.required_max as f64) as u32;
        let steepness = d.steepness_min
            + frac * (d.steepness_max - d.steepness_min)
            + (uniform_f64(&mut rng) - 0.5) * 0.2 * d.steepness_min;
        let ceiling = (d.ceiling_easy + frac * (d.ceiling_hard - d.ceiling_easy)
            + (uniform_f64(&mut rng) - 0.5) * 2.0 * d.ceiling_jitter)
            .clamp(0.05, 1.0);
        prompts.push(SyntheticPrompt {
            prompt_id: i,
            required_length: required,
            steepness,
            ceiling,
            bin_lengths: bins.clone(),
        });
    }
    for i in n_regular..n_regular + n_frontier {
        let position = if n_frontier > 1 {
            (i - n_regular) as f64 / (n_frontier - 1) as f64
        } else {
            0.0
        };
        let span = (d.frontier_required_max - d.frontier_required_min) as f64;
        let required = (d.frontier_required_min as f64
            + position * span
            + (uniform_f64(&mut rng) - 0.5) * 0.04 * span)
            .clamp(
                d.frontier_required_min as f64,
                d.frontier_required_max as f64,
            ) as u32;
        let ceiling = (d.ceiling_hard * (1.0 - 0.2 * position)
            + (uniform_f64(&mut rng) - 0.5) * 2.0 * d.ceiling_jitter)
            .clamp(0.05, 1.0);
        prompts.push(SyntheticPrompt {
            prompt_id: i,
            required_length: required,
            steepness: d.steepness_max,
            ceiling,
            bin_lengths: bins.clone(),
        });
    }
    for i in n_regular + n_frontier..n {
        prompts.push(SyntheticPrompt {
            prompt_id: i,
            required_length: d.unsolvable_required,
            steepness: 0.5 * (d.steepness_min + d.steepness_max),
            ceiling: 0.0,
            bin_lengths: bins.clone(),
        });
    }
    Ok(prompts)
}

/// Sample one group of G rollouts for a prompt from the current policy.
///
/// Per rollout: one categorical draw for the length bin, one uniform draw
/// for correctness. Draw order is fixed, so the group is a pure function of
/// the RNG state.
pub fn sample_group(
    prompt: &SyntheticPrompt,
    params: &ToyPolicyParams,
    group_size: usize,
    rng: &mut impl RngCore,
) -> Result<RolloutGroup> {
    let log_probs = params.log_probs(prompt.prompt_id)?;
    if log_probs.len() != prompt.bin_lengths.len() {
        return Err(Error::LengthMismatch {
            what: "policy bins vs environment bins",
            left: log_probs.len(),
            right: prompt.bin_lengths.len(),
        });
    }
    let probs: Vec<f64> = log_probs.iter().map(|&lp| libm::exp(lp)).collect();

    let mut bin_indices = Vec::with_capacity(group_size);
    let mut lengths = Vec::with_capacity(group_size);
    let mut correct = Vec::with_capacity(group_size);
    let mut logprob_old = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let u = uniform_f64(rng);
        let mut acc = 0.0;
        let mut bin = probs.len() - 1;
        for (b, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                bin = b;
                break;
            }
        }
        let length = prompt.bin_lengths[bin];
        let p_success = success_probability(prompt, length);
        let is_correct = uniform_f64(rng) < p_success;
        bin_indices.push(bin);
        lengths.push(length);
        correct.push(is_correct);
        logprob_old.push(log_probs[bin]);
    }
    Ok(RolloutGroup {
        prompt_id: prompt.prompt_id,
        lengths,
        correct,
        bin_indices,
        logprob_old,
        rewards: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::STREAM_ROLLOUT;

    fn test_prompt(required: u32, steepness: f64, ceiling: f64) -> SyntheticPrompt {
        SyntheticPrompt {
            prompt_id: 0,
            required_length: required,
            steepness,
            ceiling,
            bin_lengths: EnvironmentConfig::default().bin_lengths().unwrap(),
        }
    }

    #[test]
    fn success_at_midpoint_is_half_ceiling() {
        let p = test_prompt(1000, 150.0, 0.9);
        assert!((success_probability(&p, 1000) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn success_far_below_budget_vanishes() {
        let p = test_prompt(3000, 50.0, 0.9);
        assert!(success_probability(&p, 100) < 1e-12);
    }

    #[test]
    fn success_hand_oracle() {
        // ceiling * logistic(4) = 0.8 * 0.98201...
        let p = test_prompt(1000, 100.0, 0.8);
        assert!((success_probability(&p, 1400) - 0.7856).abs() < 1e-4);
    }

    #[test]
    fn success_monotone_in_length() {
        let p = test_prompt(2000, 120.0, 0.7);
        let mut last = 0.0;
        for len in (100..4000).step_by(100) {
            let s = success_probability(&p, len);
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn environment_is_deterministic() {
        let config = EnvironmentConfig::default();
        let a = make_environment(&config).unwrap();
        let b = make_environment(&config).unwrap();
        assert_eq!(a, b);
        let other = EnvironmentConfig {
            seed: 43,
            ..config
        };
        assert_ne!(a, make_environment(&other).unwrap());
    }

    #[test]
    fn unsolvable_quota_is_exact() {
        let config = EnvironmentConfig::default();
        let prompts = make_environment(&config).unwrap();
        assert_eq!(prompts.iter().filter(|p| !p.solvable()).count(), 10);

        let none = EnvironmentConfig {
            difficulty: DifficultyDistribution {
                unsolvable_fraction: 0.0,
                ..DifficultyDistribution::default()
            },
            ..config
        };
        assert!(make_environment(&none)
            .unwrap()
            .iter()
            .all(|p| p.ceiling > 0.0));
    }

    #[test]
    fn population_respects_bin_range() {
        let config = EnvironmentConfig::default();
        let prompts = make_environment(&config).unwrap();
        let bins = config.bin_lengths().unwrap();
        assert_eq!(bins.len(), 16);
        assert!(bins.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*bins.first().unwrap(), 64);
        assert_eq!(*bins.last().unwrap(), 4000);
        for p in &prompts {
            if p.solvable() {
                assert!(p.required_length >= bins[0] && p.required_length <= bins[15]);
            } else {
                assert!(p.required_length > bins[15]);
            }
        }
    }

    #[test]
    fn degenerate_policy_samples_one_bin() {
        let prompt = test_prompt(1000, 100.0, 0.9);
        let mut params = ToyPolicyParams::uniform(1, prompt.bin_lengths.len());
        params.logits[0][5] = 500.0;
        let mut rng = derive_stream(1, &[STREAM_ROLLOUT, 0]);
        let group = sample_group(&prompt, &params, 8, &mut rng).unwrap();
        assert!(group.bin_indices.iter().all(|&b| b == 5));
        assert!(group.lengths.iter().all(|&l| l == prompt.bin_lengths[5]));
    }

    #[test]
    fn zero_ceiling_never_solves() {
        let prompt = test_prompt(1000, 100.0, 0.0);
        let params = ToyPolicyParams::uniform(1, prompt.bin_lengths.len());
        let mut rng = derive_stream(2, &[STREAM_ROLLOUT, 0]);
        let group = sample_group(&prompt, &params, 64, &mut rng).unwrap();
        assert!(group.correct.iter().all(|&c| !c));
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let prompt = test_prompt(1500, 150.0, 0.8);
        let params = ToyPolicyParams::long_skewed(1, prompt.bin_lengths.len(), 3.0);
        let mut rng_a = derive_stream(7, &[STREAM_ROLLOUT, 3, 0]);
        let mut rng_b = derive_stream(7, &[STREAM_ROLLOUT, 3, 0]);
        let a = sample_group(&prompt, &params, 8, &mut rng_a).unwrap();
        let b = sample_group(&prompt, &params, 8, &mut rng_b).unwrap();
        assert_eq!(a.lengths, b.lengths);
        assert_eq!(a.correct, b.correct);
        assert_eq!(a.bin_indices, b.bin_indices);
    }

    #[test]
    fn empirical_rate_matches_policy_weighted_success() {
        let prompt = test_prompt(1200, 200.0, 0.85);
        let params = ToyPolicyParams::long_skewed(1, prompt.bin_lengths.len(), 2.0);
        let probs = params.probs(0).unwrap();
        let expected: f64 = probs
            .iter()
            .zip(&prompt.bin_lengths)
            .map(|(&p, &len)| p * success_probability(&prompt, len))
            .sum();
        let n = 20_000usize;
        let mut rng = derive_stream(99, &[STREAM_ROLLOUT]);
        let mut hits = 0usize;
        let mut drawn = 0usize;
        while drawn < n {
            let group = sample_group(&prompt, &params, 8, &mut rng).unwrap();
            hits += group.correct.iter().filter(|&&c| c).count();
            drawn += group.len();
        }
        let rate = hits as f64 / drawn as f64;
        let se = libm::sqrt(expected * (1.0 - expected) / drawn as f64);
        assert!(
            (rate - expected).abs() < 3.0 * se,
            "rate {rate} vs expected {expected} (se {se})"
        );
    }
}
