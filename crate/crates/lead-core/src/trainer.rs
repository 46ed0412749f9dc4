//! Training orchestration: one full training step per method variant, plus
//! the seed-to-records run loop.
//!
//! Each step, for every prompt in the batch: sample a group of G rollouts,
//! calibrate the per-prompt target length, score correctness and efficiency
//! rewards, turn them into advantages according to the configured method,
//! take one gradient step on the clipped-surrogate objective, and emit one
//! structured record.
//!
//! Methods differ only in how rewards become advantages:
//!
//! - `lead`: decoupled per-channel normalization, PSI-controlled dynamic
//!   weights, batch whitening;
//! - `lead_static`: decoupled normalization with fixed weights, whitened;
//! - `grpo_scalarized`: combine-then-normalize with fixed weights;
//! - `grpo_correctness_only`: scalarized with the correctness reward alone;
//! - `global_budget`: scalarized, with the efficiency reward replaced by the
//!   global length-budget penalty.
//!
//! The old policy is refreshed every step (one PPO epoch per rollout batch),
//! so importance ratios start at 1 and the reference policy for the KL term
//! is the initial policy of the run.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::advantage::{
    combine_and_whiten, decoupled_advantages, scalarized_advantage, AdvantageChannels,
    RolloutGroup,
};
use crate::controller::{
    psi_weights, ChannelBatchStats, ControllerConfig, ControllerState, PromptChannelStat,
    RewardRange,
};
use crate::env::{make_environment, sample_group, EnvironmentConfig, SyntheticPrompt};
use crate::error::{Error, Result};
use crate::metrics::EvalRecord;
use crate::policy::{grpo_loss, sgd_step, SurrogateConfig, ToyPolicyParams};
use crate::reward::{calibrate_target, global_budget_reward, score_group, RewardVector,
    TargetLengthPolicy};
use crate::rng::{derive_stream, uniform_f64, STREAM_BATCH, STREAM_EVAL, STREAM_ROLLOUT};
use crate::stats;

fn default_half() -> f64 {
    0.5
}

fn default_budget() -> u32 {
    1000
}

/// Reward-aggregation method driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Decoupled normalization with the dynamic PSI controller.
    Lead,
    /// Decoupled normalization with a fixed weight pair.
    LeadStatic {
        #[serde(default = "default_half")]
        lambda_correct: f64,
        #[serde(default = "default_half")]
        lambda_length: f64,
    },
    /// Combine-then-normalize with a fixed weight pair.
    GrpoScalarized {
        #[serde(default = "default_half")]
        lambda_correct: f64,
        #[serde(default = "default_half")]
        lambda_length: f64,
    },
    /// Scalarized training on the correctness reward alone.
    GrpoCorrectnessOnly,
    /// Scalarized training with the global length-budget penalty.
    GlobalBudget {
        #[serde(default = "default_budget")]
        budget: u32,
        #[serde(default = "default_half")]
        lambda_correct: f64,
        #[serde(default = "default_half")]
        lambda_length: f64,
    },
}

impl Method {
    /// Short machine name, used in file artifacts.
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lead => "lead",
            Method::LeadStatic { .. } => "lead_static",
            Method::GrpoScalarized { .. } => "grpo_scalarized",
            Method::GrpoCorrectnessOnly => "grpo_correctness_only",
            Method::GlobalBudget { .. } => "global_budget",
        }
    }

    /// Static weight pair, when the method has one.
    fn static_weights(&self) -> Option<(f64, f64)> {
        match *self {
            Method::Lead => None,
            Method::LeadStatic {
                lambda_correct,
                lambda_length,
            }
            | Method::GrpoScalarized {
                lambda_correct,
                lambda_length,
            }
            | Method::GlobalBudget {
                lambda_correct,
                lambda_length,
                ..
            } => Some((lambda_correct, lambda_length)),
            Method::GrpoCorrectnessOnly => Some((1.0, 0.0)),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some((wc, wl)) = self.static_weights() {
            if wc < 0.0 || wl < 0.0 || (wc + wl - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(
                    "static weights must be non-negative and sum to 1",
                ));
            }
        }
        if let Method::GlobalBudget { budget, .. } = self {
            if *budget == 0 {
                return Err(Error::InvalidConfig("budget must be positive"));
            }
        }
        Ok(())
    }
}

/// Initial policy shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyInit {
    /// Uniform over the length bins.
    Uniform,
    /// Logits rising linearly toward the longest bin.
    LongSkewed { slope: f64 },
    /// Verbose prior: a boosted band of moderate bins plus an upper tail
    /// carrying `tail_mass` of the probability over the top `tail_bins`
    /// bins. This is the default long-skewed initialization for
    /// compression-dynamics runs; most samples are moderate but the token
    /// mean is tail-dominated.
    HeavyTail {
        body_lo: usize,
        body_hi: usize,
        body_boost: f64,
        tail_mass: f64,
        tail_bins: usize,
    },
}

impl Default for PolicyInit {
    fn default() -> Self {
        PolicyInit::HeavyTail {
            body_lo: 5,
            body_hi: 7,
            body_boost: 4.0,
            tail_mass: 0.34,
            tail_bins: 1,
        }
    }
}

impl PolicyInit {
    fn build(&self, n_prompts: usize, n_bins: usize) -> ToyPolicyParams {
        match *self {
            PolicyInit::Uniform => ToyPolicyParams::uniform(n_prompts, n_bins),
            PolicyInit::LongSkewed { slope } => {
                ToyPolicyParams::long_skewed(n_prompts, n_bins, slope)
            }
            PolicyInit::HeavyTail {
                body_lo,
                body_hi,
                body_boost,
                tail_mass,
                tail_bins,
            } => ToyPolicyParams::heavy_tail(
                n_prompts, n_bins, body_lo, body_hi, body_boost, tail_mass, tail_bins,
            ),
        }
    }
}

/// Full method-side configuration of a run.
///
/// The controller's `epsilon` is the single numerical regularizer, shared by
/// advantage normalization and the controller statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub method: Method,
    /// Target-length calibration policy (aggregator, l_min, b_max).
    pub target: TargetLengthPolicy,
    pub controller: ControllerConfig,
    pub surrogate: SurrogateConfig,
    pub learning_rate: f64,
    pub n_steps: usize,
    /// Prompts per step; `None` trains on the full population every step.
    pub batch_prompts: Option<usize>,
    pub policy_init: PolicyInit,
    /// Rollouts per prompt in the before/after policy evaluations.
    pub eval_samples: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            method: Method::Lead,
            target: TargetLengthPolicy::default(),
            controller: ControllerConfig::default(),
            surrogate: SurrogateConfig::default(),
            learning_rate: 5.0,
            n_steps: 500,
            batch_prompts: None,
            policy_init: PolicyInit::default(),
            eval_samples: 8,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        self.target.validate()?;
        self.controller.validate()?;
        if !(self.surrogate.clip_ratio > 0.0 && self.surrogate.clip_ratio < 1.0) {
            return Err(Error::InvalidConfig("clip_ratio must lie in (0, 1)"));
        }
        if !(self.surrogate.kl_coef >= 0.0) {
            return Err(Error::InvalidConfig("kl_coef must be non-negative"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be non-negative"));
        }
        if self.batch_prompts == Some(0) {
            return Err(Error::InvalidConfig("batch_prompts must be >= 1"));
        }
        if self.eval_samples == 0 {
            return Err(Error::InvalidConfig("eval_samples must be >= 1"));
        }
        Ok(())
    }
}

/// PSI-controller diagnostics attached to a step record when the dynamic
/// controller ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerTrace {
    pub cv_c: f64,
    pub cv_l: f64,
    pub potential_c: f64,
    pub potential_l: f64,
    pub psi_c: f64,
    pub psi_l: f64,
}

/// One training step's log line.
///
/// `l_star_*` statistics cover the prompts that received a calibrated target
/// this step; prompts assigned the unsolved sentinel are counted in
/// `unsolved_count` and excluded from the target statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStepRecord {
    pub step: u64,
    pub lambda_c: f64,
    pub lambda_l: f64,
    /// Fraction of correct rollouts in the whole rollout batch.
    pub batch_accuracy: f64,
    /// Mean sampled response length over the rollout batch.
    pub mean_length: f64,
    pub l_star_mean: f64,
    pub l_star_min: f64,
    pub l_star_max: f64,
    /// Prompts with no correct rollout this step.
    pub unsolved_count: u64,
    /// Method's efficiency reward averaged over correct rollouts.
    pub mean_r_eff_correct: f64,
    pub loss: f64,
    pub kl: f64,
    #[serde(flatten)]
    pub controller_trace: Option<ControllerTrace>,
}

/// Result of one training step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub params: ToyPolicyParams,
    pub controller: ControllerState,
    pub record: TrainStepRecord,
    /// True when the batch had no solved prompt and the controller update
    /// was skipped.
    pub controller_frozen: bool,
}

struct ScoredGroup {
    group: RolloutGroup,
    target: f64,
    sentinel: bool,
}

fn score_batch(
    groups: Vec<RolloutGroup>,
    config: &MethodConfig,
) -> Result<Vec<ScoredGroup>> {
    groups
        .into_iter()
        .map(|mut group| {
            let sentinel = config.target.aggregator.filters_on_correctness()
                && !group.correct.iter().any(|&c| c);
            let target;
            match config.method {
                Method::GlobalBudget { budget, .. } => {
                    // The budget penalty replaces the symmetric reward; the
                    // target is still calibrated so the step record stays
                    // comparable across methods.
                    target = calibrate_target(&group.lengths, &group.correct, &config.target)?;
                    group.rewards = group
                        .lengths
                        .iter()
                        .zip(&group.correct)
                        .map(|(&len, &c)| {
                            Ok(RewardVector {
                                r_correct: if c { 1.0 } else { 0.0 },
                                r_length: global_budget_reward(len, budget)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                _ => {
                    let (t, rewards) =
                        score_group(&group.lengths, &group.correct, &config.target)?;
                    target = t;
                    group.rewards = rewards;
                }
            }
            Ok(ScoredGroup {
                group,
                target,
                sentinel,
            })
        })
        .collect()
}

/// Per-prompt controller statistics under the efficiency-channel masking:
/// correctness uses all G rollouts of every prompt; efficiency is restricted
/// to correct rollouts and prompts without any are ineligible.
fn controller_prompt_stats(
    scored: &[ScoredGroup],
) -> (Vec<PromptChannelStat>, Vec<PromptChannelStat>) {
    let mut correctness = Vec::with_capacity(scored.len());
    let mut efficiency = Vec::with_capacity(scored.len());
    for s in scored {
        let r_c: Vec<f64> = s.group.rewards.iter().map(|r| r.r_correct).collect();
        correctness.push(PromptChannelStat {
            mu: stats::mean(&r_c),
            sigma: stats::population_std(&r_c),
            eligible: true,
        });
        let r_l_correct: Vec<f64> = s
            .group
            .rewards
            .iter()
            .zip(&s.group.correct)
            .filter(|(_, &c)| c)
            .map(|(r, _)| r.r_length)
            .collect();
        efficiency.push(PromptChannelStat {
            mu: stats::mean(&r_l_correct),
            sigma: stats::population_std(&r_l_correct),
            eligible: !r_l_correct.is_empty(),
        });
    }
    (correctness, efficiency)
}

/// Execute one training step and produce the next parameters, controller
/// state, and step record.
pub fn train_step(
    params: &ToyPolicyParams,
    params_ref: &ToyPolicyParams,
    env: &[SyntheticPrompt],
    batch_ids: &[usize],
    config: &MethodConfig,
    controller: &ControllerState,
    group_size: usize,
    step_index: u64,
    root_seed: u64,
) -> Result<StepOutcome> {
    if batch_ids.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }

    // Phase 0: sample one group per prompt from its own derived stream.
    let groups = batch_ids
        .iter()
        .map(|&id| {
            let prompt = env.get(id).ok_or(Error::IndexOutOfRange {
                index: id,
                len: env.len(),
            })?;
            let mut rng = derive_stream(root_seed, &[STREAM_ROLLOUT, step_index, id as u64]);
            sample_group(prompt, params, group_size, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    // Phase 1: targets, rewards, decoupled or scalarized advantages.
    let scored = score_batch(groups, config)?;
    let epsilon = config.controller.epsilon;

    let mut controller_next = *controller;
    let mut frozen = false;
    let mut trace = None;

    let advantages: Vec<Vec<f64>> = match config.method {
        Method::Lead | Method::LeadStatic { .. } => {
            let mut channels: Vec<AdvantageChannels> = scored
                .iter()
                .map(|s| decoupled_advantages(&s.group, epsilon))
                .collect();

            // Phase 2: the PSI controller (dynamic method only).
            let weights = if let Method::Lead = config.method {
                let (stats_c, stats_l) = controller_prompt_stats(&scored);
                let stats_c = ChannelBatchStats::from_prompt_stats(
                    &stats_c,
                    RewardRange::CORRECTNESS,
                    config.controller.alpha,
                    epsilon,
                )?
                .expect("correctness channel always has eligible prompts");
                match ChannelBatchStats::from_prompt_stats(
                    &stats_l,
                    RewardRange::EFFICIENCY,
                    config.controller.alpha,
                    epsilon,
                )? {
                    Some(stats_l) => {
                        let mut stats_c = stats_c;
                        let mut stats_l = stats_l;
                        let target = psi_weights(&mut stats_c, &mut stats_l, epsilon);
                        controller_next.ema_update(target);
                        trace = Some(ControllerTrace {
                            cv_c: stats_c.cv,
                            cv_l: stats_l.cv,
                            potential_c: stats_c.potential,
                            potential_l: stats_l.potential,
                            psi_c: stats_c.psi,
                            psi_l: stats_l.psi,
                        });
                        controller_next.weights()
                    }
                    None => {
                        // Every prompt unsolved: no usable efficiency signal,
                        // keep the previous weights for this step.
                        frozen = true;
                        controller_next.weights()
                    }
                }
            } else {
                config.method.static_weights().unwrap()
            };

            // Phase 3: combine under the weights and whiten over the batch.
            combine_and_whiten(&mut channels, weights, epsilon)?;
            channels.into_iter().map(|c| c.a_combined).collect()
        }
        Method::GrpoScalarized { .. }
        | Method::GrpoCorrectnessOnly
        | Method::GlobalBudget { .. } => {
            let (wc, wl) = config.method.static_weights().unwrap();
            scored
                .iter()
                .map(|s| {
                    let combined: Vec<f64> = s
                        .group
                        .rewards
                        .iter()
                        .map(|r| wc * r.r_correct + wl * r.r_length)
                        .collect();
                    scalarized_advantage(&combined, epsilon)
                })
                .collect()
        }
    };

    // Policy update: params_old equals the sampling parameters (one PPO
    // epoch per rollout batch), so ratios start at 1.
    let groups: Vec<RolloutGroup> = scored.iter().map(|s| s.group.clone()).collect();
    let loss_out = grpo_loss(
        params,
        params,
        params_ref,
        &groups,
        &advantages,
        &config.surrogate,
    )?;
    let params_next = sgd_step(params, &loss_out.grad, config.learning_rate)?;

    // Step record.
    let total_rollouts: usize = scored.iter().map(|s| s.group.len()).sum();
    let n_correct: usize = scored
        .iter()
        .map(|s| s.group.correct.iter().filter(|&&c| c).count())
        .sum();
    let mean_length = scored
        .iter()
        .flat_map(|s| s.group.lengths.iter().map(|&l| l as f64))
        .sum::<f64>()
        / total_rollouts as f64;
    let calibrated: Vec<f64> = scored
        .iter()
        .filter(|s| !s.sentinel)
        .map(|s| s.target)
        .collect();
    let (l_star_mean, l_star_min, l_star_max) = if calibrated.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            stats::mean(&calibrated),
            calibrated.iter().cloned().fold(f64::INFINITY, f64::min),
            calibrated.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let r_eff_correct: Vec<f64> = scored
        .iter()
        .flat_map(|s| {
            s.group
                .rewards
                .iter()
                .zip(&s.group.correct)
                .filter(|(_, &c)| c)
                .map(|(r, _)| r.r_length)
        })
        .collect();
    let (lambda_c, lambda_l) = match config.method {
        Method::Lead => controller_next.weights(),
        _ => config.method.static_weights().unwrap(),
    };

    let record = TrainStepRecord {
        step: step_index,
        lambda_c,
        lambda_l,
        batch_accuracy: n_correct as f64 / total_rollouts as f64,
        mean_length,
        l_star_mean,
        l_star_min,
        l_star_max,
        unsolved_count: scored
            .iter()
            .filter(|s| !s.group.correct.iter().any(|&c| c))
            .count() as u64,
        mean_r_eff_correct: stats::mean(&r_eff_correct),
        loss: loss_out.loss,
        kl: loss_out.kl,
        controller_trace: trace,
    };

    Ok(StepOutcome {
        params: params_next,
        controller: controller_next,
        record,
        controller_frozen: frozen,
    })
}

/// Sample per-prompt evaluation records for a fixed policy.
///
/// Evaluation streams depend only on the root seed and prompt id, so the
/// before/after evaluations of runs sharing an environment are directly
/// comparable.
pub fn evaluate_policy(
    params: &ToyPolicyParams,
    env: &[SyntheticPrompt],
    n_samples: usize,
    root_seed: u64,
    method: &str,
) -> Result<Vec<EvalRecord>> {
    env.iter()
        .map(|prompt| {
            let mut rng = derive_stream(root_seed, &[STREAM_EVAL, prompt.prompt_id as u64]);
            let group = sample_group(prompt, params, n_samples, &mut rng)?;
            let accuracy =
                group.correct.iter().filter(|&&c| c).count() as f64 / group.len() as f64;
            let mean_length =
                group.lengths.iter().map(|&l| l as f64).sum::<f64>() / group.len() as f64;
            Ok(EvalRecord {
                prompt_id: prompt.prompt_id,
                method: method.to_string(),
                accuracy,
                mean_length,
            })
        })
        .collect()
}

/// Everything a finished run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub env: Vec<SyntheticPrompt>,
    pub initial_params: ToyPolicyParams,
    pub final_params: ToyPolicyParams,
    pub records: Vec<TrainStepRecord>,
    /// Steps on which the controller update was skipped for lack of any
    /// solved prompt.
    pub frozen_steps: u64,
    /// Per-prompt evaluation of the initial policy ("base").
    pub base_eval: Vec<EvalRecord>,
    /// Per-prompt evaluation of the trained policy.
    pub final_eval: Vec<EvalRecord>,
}

fn select_batch(
    n_prompts: usize,
    batch_prompts: Option<usize>,
    root_seed: u64,
    step_index: u64,
) -> Result<Vec<usize>> {
    match batch_prompts {
        None => Ok((0..n_prompts).collect()),
        Some(m) if m >= n_prompts => Ok((0..n_prompts).collect()),
        Some(m) => {
            // Partial Fisher-Yates over the prompt indices.
            let mut rng = derive_stream(root_seed, &[STREAM_BATCH, step_index]);
            let mut ids: Vec<usize> = (0..n_prompts).collect();
            for i in 0..m {
                let j = i + (uniform_f64(&mut rng) * (n_prompts - i) as f64) as usize;
                ids.swap(i, j.min(n_prompts - 1));
            }
            ids.truncate(m);
            Ok(ids)
        }
    }
}

/// Run a full training experiment: build the environment, train for
/// `n_steps`, and evaluate the policy before and after.
pub fn run(env_config: &EnvironmentConfig, method_config: &MethodConfig) -> Result<RunOutput> {
    method_config.validate()?;
    if method_config.target.b_max != env_config.bin_max {
        return Err(Error::InvalidConfig(
            "target b_max must equal the environment's bin_max",
        ));
    }
    let env = make_environment(env_config)?;
    let n_bins = env_config.n_length_bins;
    let initial_params = method_config.policy_init.build(env_config.n_prompts, n_bins);
    let params_ref = initial_params.clone();

    let mut params = initial_params.clone();
    let mut controller = ControllerState::new(method_config.controller);
    let mut records = Vec::with_capacity(method_config.n_steps);
    let mut frozen_steps = 0;
    for step in 1..=method_config.n_steps as u64 {
        let batch_ids = select_batch(
            env_config.n_prompts,
            method_config.batch_prompts,
            env_config.seed,
            step,
        )?;
        let outcome = train_step(
            &params,
            &params_ref,
            &env,
            &batch_ids,
            method_config,
            &controller,
            env_config.group_size,
            step,
            env_config.seed,
        )?;
        params = outcome.params;
        controller = outcome.controller;
        if outcome.controller_frozen {
            frozen_steps += 1;
        }
        records.push(outcome.record);
    }

    let base_eval = evaluate_policy(
        &initial_params,
        &env,
        method_config.eval_samples,
        env_config.seed,
        "base",
    )?;
    let final_eval = evaluate_policy(
        &params,
        &env,
        method_config.eval_samples,
        env_config.seed,
        method_config.method.name(),
    )?;

    Ok(RunOutput {
        env,
        initial_params,
        final_params: params,
        records,
        frozen_steps,
        base_eval,
        final_eval,
    })
}

/// Expected response length of a policy under the environment's bins,
/// averaged over prompts; the deterministic counterpart of the sampled mean.
pub fn expected_mean_length(params: &ToyPolicyParams, env: &[SyntheticPrompt]) -> Result<f64> {
    let mut total = 0.0;
    for prompt in env {
        let probs = params.probs(prompt.prompt_id)?;
        total += probs
            .iter()
            .zip(&prompt.bin_lengths)
            .map(|(&p, &len)| p * len as f64)
            .sum::<f64>();
    }
    Ok(total / env.len() as f64)
}

/// Label for one arm of an ablation sweep.
pub fn arm_label(index: usize, method: &Method) -> String {
    format!("{:02}_{}", index, method.name())
}
