//! Categorical toy policy and the clipped-surrogate objective.
//!
//! The policy keeps one row of logits per prompt over a shared set of length
//! bins; a rollout is a single draw from the row's softmax, so the per-token
//! sum of the usual sequence objective degenerates to one term and the
//! per-rollout importance ratio equals the single-action ratio.
//!
//! The loss minimized each step is
//!
//!   L = -mean_q mean_j min(rho * A, clip(rho, 1-eps, 1+eps) * A)
//!       + kl_coef * mean_q KL(pi_theta(.|q) || pi_ref(.|q)),
//!
//! with rho the new/old probability ratio of the sampled bin and A the
//! combined advantage. The KL term is the exact categorical divergence.
//! Gradients with respect to the logits are computed analytically; the
//! gradient of the surrogate flows through whichever branch the min selects
//! (zero when the clipped branch saturates).

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::advantage::RolloutGroup;
use crate::error::{Error, Result};

/// Per-prompt categorical policy over length bins, parameterized by logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicyParams {
    /// `logits[prompt][bin]`.
    pub logits: Vec<Vec<f64>>,
}

/// Gradient with the same shape as the policy logits.
pub type Gradient = Vec<Vec<f64>>;

impl ToyPolicyParams {
    /// Uniform policy: all logits zero.
    pub fn uniform(n_prompts: usize, n_bins: usize) -> Self {
        ToyPolicyParams {
            logits: vec![vec![0.0; n_bins]; n_prompts],
        }
    }

    /// Policy with logits increasing linearly toward the longest bin,
    /// `slope * i / (n_bins - 1)`, emulating a verbose prior.
    pub fn long_skewed(n_prompts: usize, n_bins: usize, slope: f64) -> Self {
        let row: Vec<f64> = (0..n_bins)
            .map(|i| {
                if n_bins > 1 {
                    slope * i as f64 / (n_bins - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        ToyPolicyParams {
            logits: vec![row; n_prompts],
        }
    }

    /// Verbose prior with a heavy upper tail: most probability sits on a
    /// band of moderate bins (`body_lo..=body_hi`, boosted by `body_boost`
    /// logits over the remaining bins), while the top `tail_bins` bins are
    /// shifted to jointly carry `tail_mass`. Token-wise the mean is
    /// dominated by the long tail even though most samples are moderate,
    /// the length profile of an over-thinking policy.
    pub fn heavy_tail(
        n_prompts: usize,
        n_bins: usize,
        body_lo: usize,
        body_hi: usize,
        body_boost: f64,
        tail_mass: f64,
        tail_bins: usize,
    ) -> Self {
        let tail_bins = tail_bins.clamp(1, n_bins.saturating_sub(1));
        let split = n_bins - tail_bins;
        let body_hi = body_hi.min(split.saturating_sub(1));
        let body_lo = body_lo.min(body_hi);
        let tail_mass = tail_mass.clamp(1e-6, 1.0 - 1e-6);
        let body = |i: usize| -> f64 {
            if (body_lo..=body_hi).contains(&i) {
                body_boost
            } else {
                0.0
            }
        };
        let weight_body: f64 = (0..split).map(|i| libm::exp(body(i))).sum();
        let weight_tail: f64 = (split..n_bins).map(|i| libm::exp(body(i))).sum();
        // Shift the tail logits so that p(tail) = tail_mass exactly.
        let shift = libm::log(tail_mass * weight_body / ((1.0 - tail_mass) * weight_tail));
        let row: Vec<f64> = (0..n_bins)
            .map(|i| if i < split { body(i) } else { body(i) + shift })
            .collect();
        ToyPolicyParams {
            logits: vec![row; n_prompts],
        }
    }

    pub fn n_prompts(&self) -> usize {
        self.logits.len()
    }

    pub fn n_bins(&self) -> usize {
        self.logits.first().map_or(0, |row| row.len())
    }

    fn row(&self, prompt: usize) -> Result<&[f64]> {
        self.logits
            .get(prompt)
            .map(|r| r.as_slice())
            .ok_or(Error::IndexOutOfRange {
                index: prompt,
                len: self.logits.len(),
            })
    }

    /// Log-softmax of one prompt's row.
    pub fn log_probs(&self, prompt: usize) -> Result<Vec<f64>> {
        let row = self.row(prompt)?;
        if row.is_empty() {
            return Err(Error::EmptyInput("policy row"));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max
            + libm::log(
                row.iter().map(|&z| libm::exp(z - max)).sum::<f64>(),
            );
        Ok(row.iter().map(|&z| z - log_sum).collect())
    }

    /// Softmax probabilities of one prompt's row.
    pub fn probs(&self, prompt: usize) -> Result<Vec<f64>> {
        Ok(self.log_probs(prompt)?.iter().map(|&lp| libm::exp(lp)).collect())
    }

    /// Log-probability of a single bin under one prompt's softmax.
    pub fn log_prob(&self, prompt: usize, bin: usize) -> Result<f64> {
        let lps = self.log_probs(prompt)?;
        lps.get(bin).copied().ok_or(Error::IndexOutOfRange {
            index: bin,
            len: lps.len(),
        })
    }

    fn same_shape(&self, other: &ToyPolicyParams, what: &'static str) -> Result<()> {
        if self.n_prompts() != other.n_prompts() || self.n_bins() != other.n_bins() {
            return Err(Error::LengthMismatch {
                what,
                left: self.n_prompts() * self.n_bins(),
                right: other.n_prompts() * other.n_bins(),
            });
        }
        Ok(())
    }
}

/// Clip and policy-regularization settings of the surrogate objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// PPO clip threshold; ratios are clipped to [1 - clip, 1 + clip].
    pub clip_ratio: f64,
    /// Weight of the KL term against the reference policy.
    pub kl_coef: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            clip_ratio: 0.2,
            kl_coef: 1e-3,
        }
    }
}

/// Pessimistic clipped surrogate:
/// `min(ratio * advantage, clip(ratio, 1-clip, 1+clip) * advantage)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_ratio: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_ratio, 1.0 + clip_ratio);
    (ratio * advantage).min(clipped * advantage)
}

/// Loss, exact KL, and analytic gradient for one batch.
#[derive(Debug, Clone)]
pub struct GrpoLossOutput {
    /// Total loss: negative surrogate plus `kl_coef * kl`.
    pub loss: f64,
    /// Exact categorical KL(pi_theta || pi_ref), averaged over prompts.
    pub kl: f64,
    /// d(loss)/d(logits), same shape as the parameters.
    pub grad: Gradient,
}

/// Evaluate the full objective and its gradient on a rollout batch.
///
/// `advantages[q][j]` must align with `batch[q]`'s rollouts. Old
/// log-probabilities are recomputed from `params_old` (which equals the
/// sampling-time parameters in ordinary single-epoch training, making every
/// ratio start at 1).
pub fn grpo_loss(
    params: &ToyPolicyParams,
    params_old: &ToyPolicyParams,
    params_ref: &ToyPolicyParams,
    batch: &[RolloutGroup],
    advantages: &[Vec<f64>],
    config: &SurrogateConfig,
) -> Result<GrpoLossOutput> {
    params.same_shape(params_old, "params vs params_old")?;
    params.same_shape(params_ref, "params vs params_ref")?;
    if batch.is_empty() {
        return Err(Error::EmptyInput("rollout batch"));
    }
    if batch.len() != advantages.len() {
        return Err(Error::LengthMismatch {
            what: "batch vs advantages",
            left: batch.len(),
            right: advantages.len(),
        });
    }

    let n_prompts = batch.len() as f64;
    let mut grad: Gradient = vec![vec![0.0; params.n_bins()]; params.n_prompts()];
    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;

    for (group, advs) in batch.iter().zip(advantages) {
        if group.len() != advs.len() {
            return Err(Error::LengthMismatch {
                what: "group vs advantages",
                left: group.len(),
                right: advs.len(),
            });
        }
        if group.is_empty() {
            return Err(Error::EmptyInput("rollout group"));
        }
        let row = group.prompt_id;
        let log_p = params.log_probs(row)?;
        let log_p_old = params_old.log_probs(row)?;
        let log_p_ref = params_ref.log_probs(row)?;
        let p: Vec<f64> = log_p.iter().map(|&lp| libm::exp(lp)).collect();

        // Exact KL(p || ref) for this prompt, plus its logit gradient
        // p_b * ((log p_b - log ref_b) - KL).
        let kl_q: f64 = p
            .iter()
            .zip(&log_p)
            .zip(&log_p_ref)
            .map(|((&pb, &lpb), &lrb)| pb * (lpb - lrb))
            .sum();
        kl_sum += kl_q;
        let kl_scale = config.kl_coef / n_prompts;
        for b in 0..p.len() {
            grad[row][b] += kl_scale * p[b] * ((log_p[b] - log_p_ref[b]) - kl_q);
        }

        let group_scale = 1.0 / (n_prompts * group.len() as f64);
        for (j, &advantage) in advs.iter().enumerate() {
            let bin = group.bin_indices[j];
            if bin >= p.len() {
                return Err(Error::IndexOutOfRange {
                    index: bin,
                    len: p.len(),
                });
            }
            let ratio = libm::exp(log_p[bin] - log_p_old[bin]);
            let unclipped = ratio * advantage;
            let clipped =
                ratio.clamp(1.0 - config.clip_ratio, 1.0 + config.clip_ratio) * advantage;
            surrogate_sum += group_scale * unclipped.min(clipped);
            // Gradient flows only through the unclipped branch; ties pick it.
            if unclipped <= clipped {
                let coef = -group_scale * advantage * ratio;
                for b in 0..p.len() {
                    let indicator = if b == bin { 1.0 } else { 0.0 };
                    grad[row][b] += coef * (indicator - p[b]);
                }
            }
        }
    }

    Ok(GrpoLossOutput {
        loss: -surrogate_sum + config.kl_coef * (kl_sum / n_prompts),
        kl: kl_sum / n_prompts,
        grad,
    })
}

/// Plain gradient-descent parameter update: `params - learning_rate * grad`.
pub fn sgd_step(
    params: &ToyPolicyParams,
    grad: &Gradient,
    learning_rate: f64,
) -> Result<ToyPolicyParams> {
    if params.n_prompts() != grad.len() {
        return Err(Error::LengthMismatch {
            what: "params vs gradient",
            left: params.n_prompts(),
            right: grad.len(),
        });
    }
    let logits = params
        .logits
        .iter()
        .zip(grad)
        .map(|(row, grow)| {
            if row.len() != grow.len() {
                return Err(Error::LengthMismatch {
                    what: "params row vs gradient row",
                    left: row.len(),
                    right: grow.len(),
                });
            }
            Ok(row
                .iter()
                .zip(grow)
                .map(|(&z, &g)| z - learning_rate * g)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(ToyPolicyParams { logits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardVector;
    use crate::rng::{derive_stream, uniform_f64};

    fn mk_group(prompt_id: usize, bins: Vec<usize>, params_old: &ToyPolicyParams) -> RolloutGroup {
        let logprob_old = bins
            .iter()
            .map(|&b| params_old.log_prob(prompt_id, b).unwrap())
            .collect();
        let n = bins.len();
        RolloutGroup {
            prompt_id,
            lengths: vec![1000; n],
            correct: vec![true; n],
            bin_indices: bins,
            logprob_old,
            rewards: vec![
                RewardVector {
                    r_correct: 1.0,
                    r_length: 0.0
                };
                n
            ],
        }
    }

    #[test]
    fn log_prob_uniform() {
        let params = ToyPolicyParams::uniform(1, 4);
        for bin in 0..4 {
            assert!((params.log_prob(0, bin).unwrap() - libm::log(0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn log_prob_dominant_logit() {
        let params = ToyPolicyParams {
            logits: vec![vec![200.0, 0.0, 0.0]],
        };
        assert!(params.log_prob(0, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn log_prob_two_bins() {
        let params = ToyPolicyParams {
            logits: vec![vec![1.0, 0.0]],
        };
        let expected = libm::log(core::f64::consts::E / (core::f64::consts::E + 1.0));
        assert!((params.log_prob(0, 0).unwrap() - expected).abs() < 1e-12);
        assert!((params.log_prob(0, 0).unwrap() + 0.31326).abs() < 1e-5);
    }

    #[test]
    fn probs_sum_to_one() {
        let params = ToyPolicyParams {
            logits: vec![vec![3.0, -1.0, 0.5, 10.0], vec![0.0, 0.0, 0.0, 0.0]],
        };
        for prompt in 0..2 {
            let sum: f64 = params.probs(prompt).unwrap().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn index_errors() {
        let params = ToyPolicyParams::uniform(2, 3);
        assert!(params.log_prob(2, 0).is_err());
        assert!(params.log_prob(0, 3).is_err());
    }

    #[test]
    fn clipped_surrogate_cases() {
        assert_eq!(clipped_surrogate(1.0, 2.5, 0.2), 2.5);
        // Upper clip active on positive advantage.
        assert!((clipped_surrogate(1.5, 2.0, 0.2) - 2.4).abs() < 1e-15);
        // Negative advantage with the ratio below the clip window: the
        // pessimistic min picks the clipped branch, -0.8.
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        // Negative advantage with the ratio above the window: unclipped wins.
        assert_eq!(clipped_surrogate(1.5, -1.0, 0.2), -1.5);
    }

    #[test]
    fn null_update_is_zero() {
        let params = ToyPolicyParams::uniform(2, 4);
        let batch = vec![
            mk_group(0, vec![0, 1], &params),
            mk_group(1, vec![2, 3], &params),
        ];
        let advantages = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let out = grpo_loss(
            &params,
            &params,
            &params,
            &batch,
            &advantages,
            &SurrogateConfig::default(),
        )
        .unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.kl, 0.0);
        assert!(out.grad.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn kl_zero_iff_same_distribution() {
        let params = ToyPolicyParams {
            logits: vec![vec![0.3, -0.2, 1.0]],
        };
        let shifted = ToyPolicyParams {
            // Same distribution: constant shift of the row.
            logits: vec![vec![1.3, 0.8, 2.0]],
        };
        let other = ToyPolicyParams {
            logits: vec![vec![0.0, 0.0, 0.0]],
        };
        let batch = vec![mk_group(0, vec![0], &params)];
        let advantages = vec![vec![1.0]];
        let cfg = SurrogateConfig {
            clip_ratio: 0.2,
            kl_coef: 1.0,
        };
        let same = grpo_loss(&params, &params, &shifted, &batch, &advantages, &cfg).unwrap();
        assert!(same.kl.abs() < 1e-15);
        let diff = grpo_loss(&params, &params, &other, &batch, &advantages, &cfg).unwrap();
        assert!(diff.kl > 0.0);
    }

    #[test]
    fn sgd_cases() {
        let params = ToyPolicyParams {
            logits: vec![vec![1.0]],
        };
        let zero = vec![vec![0.0]];
        let two = vec![vec![2.0]];
        assert_eq!(sgd_step(&params, &zero, 0.5).unwrap(), params);
        assert_eq!(sgd_step(&params, &two, 0.0).unwrap(), params);
        let stepped = sgd_step(&params, &two, 0.1).unwrap();
        assert!((stepped.logits[0][0] - 0.8).abs() < 1e-15);
    }

    fn random_instance(
        seed: u64,
        n_prompts: usize,
        n_bins: usize,
        group_size: usize,
    ) -> (
        ToyPolicyParams,
        ToyPolicyParams,
        ToyPolicyParams,
        Vec<RolloutGroup>,
        Vec<Vec<f64>>,
    ) {
        let mut rng = derive_stream(seed, &[0xF00D]);
        let mut sample_params = |scale: f64| ToyPolicyParams {
            logits: (0..n_prompts)
                .map(|_| {
                    (0..n_bins)
                        .map(|_| scale * (uniform_f64(&mut rng) - 0.5))
                        .collect()
                })
                .collect(),
        };
        let params = sample_params(2.0);
        let params_old = sample_params(2.0);
        let params_ref = sample_params(1.0);
        let mut rng2 = derive_stream(seed, &[0xBEEF]);
        let batch: Vec<RolloutGroup> = (0..n_prompts)
            .map(|q| {
                let bins: Vec<usize> = (0..group_size)
                    .map(|_| (uniform_f64(&mut rng2) * n_bins as f64) as usize)
                    .collect();
                mk_group(q, bins, &params_old)
            })
            .collect();
        let advantages: Vec<Vec<f64>> = (0..n_prompts)
            .map(|_| {
                (0..group_size)
                    .map(|_| 4.0 * (uniform_f64(&mut rng2) - 0.5))
                    .collect()
            })
            .collect();
        (params, params_old, params_ref, batch, advantages)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = SurrogateConfig {
            clip_ratio: 0.2,
            kl_coef: 1e-3,
        };
        let (params, params_old, params_ref, batch, advantages) = random_instance(7, 3, 4, 4);
        let out = grpo_loss(&params, &params_old, &params_ref, &batch, &advantages, &cfg).unwrap();
        let h = 1e-5;
        for q in 0..3 {
            for b in 0..4 {
                let mut plus = params.clone();
                plus.logits[q][b] += h;
                let mut minus = params.clone();
                minus.logits[q][b] -= h;
                let lp = grpo_loss(&plus, &params_old, &params_ref, &batch, &advantages, &cfg)
                    .unwrap()
                    .loss;
                let lm = grpo_loss(&minus, &params_old, &params_ref, &batch, &advantages, &cfg)
                    .unwrap()
                    .loss;
                let fd = (lp - lm) / (2.0 * h);
                let analytic = out.grad[q][b];
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4, "grad[{q}][{b}]: {analytic} vs {fd}");
            }
        }
    }

    #[test]
    fn wide_clip_reduces_to_importance_weighted_surrogate() {
        let cfg = SurrogateConfig {
            clip_ratio: 1e9,
            kl_coef: 0.0,
        };
        let (params, params_old, params_ref, batch, advantages) = random_instance(11, 2, 5, 3);
        let out = grpo_loss(&params, &params_old, &params_ref, &batch, &advantages, &cfg).unwrap();
        let mut plain = 0.0;
        for (group, advs) in batch.iter().zip(&advantages) {
            for (j, &a) in advs.iter().enumerate() {
                let ratio = libm::exp(
                    params.log_prob(group.prompt_id, group.bin_indices[j]).unwrap()
                        - params_old
                            .log_prob(group.prompt_id, group.bin_indices[j])
                            .unwrap(),
                );
                plain += ratio * a / (batch.len() * group.len()) as f64;
            }
        }
        assert!((out.loss + plain).abs() < 1e-9);
    }

    #[test]
    fn loss_invariant_to_common_logit_shift() {
        let cfg = SurrogateConfig::default();
        let (mut params, mut params_old, mut params_ref, batch, advantages) =
            random_instance(13, 2, 4, 3);
        let base = grpo_loss(&params, &params_old, &params_ref, &batch, &advantages, &cfg)
            .unwrap()
            .loss;
        for b in 0..4 {
            params.logits[1][b] += 7.5;
            params_old.logits[1][b] += 7.5;
            params_ref.logits[1][b] += 7.5;
        }
        let shifted = grpo_loss(&params, &params_old, &params_ref, &batch, &advantages, &cfg)
            .unwrap()
            .loss;
        assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_errors() {
        let params = ToyPolicyParams::uniform(2, 4);
        let other = ToyPolicyParams::uniform(2, 5);
        let batch = vec![mk_group(0, vec![0], &params)];
        let advantages = vec![vec![1.0, 2.0]];
        assert!(grpo_loss(
            &params,
            &other,
            &params,
            &batch,
            &vec![vec![1.0]],
            &SurrogateConfig::default()
        )
        .is_err());
        assert!(grpo_loss(
            &params,
            &params,
            &params,
            &batch,
            &advantages,
            &SurrogateConfig::default()
        )
        .is_err());
    }
}
