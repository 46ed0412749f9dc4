//! Evaluation metrics: accuracy-efficiency score, difficulty tiers, rank
//! correlation, and per-tier length deltas.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the accuracy-efficiency score.
///
/// The accuracy-loss weight `gamma` is much larger than the gain weight
/// `beta`, so trading accuracy for brevity is penalized asymmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AesWeights {
    /// Weight of relative length reduction.
    pub alpha: f64,
    /// Weight of relative accuracy gains.
    pub beta: f64,
    /// Weight of relative accuracy losses.
    pub gamma: f64,
}

impl Default for AesWeights {
    fn default() -> Self {
        AesWeights {
            alpha: 1.0,
            beta: 3.0,
            gamma: 10.0,
        }
    }
}

/// Accuracy-efficiency score of a model against a reference:
///
///   d_len = (len_ref - len_model) / len_ref
///   d_acc = (acc_model - acc_ref) / acc_ref
///   AES   = alpha * d_len + beta * |d_acc|    if d_acc >= 0
///         = alpha * d_len - gamma * |d_acc|   otherwise
///
/// Both branches agree at `d_acc == 0`, so the score is continuous in value
/// (the slope jumps). Accuracy may be given as a fraction or a percentage as
/// long as both sides use the same unit.
pub fn aes(
    acc_model: f64,
    len_model: f64,
    acc_ref: f64,
    len_ref: f64,
    weights: &AesWeights,
) -> Result<f64> {
    if !(acc_ref > 0.0) || !(len_ref > 0.0) {
        return Err(Error::InvalidConfig(
            "aes reference accuracy and length must be positive",
        ));
    }
    let d_len = (len_ref - len_model) / len_ref;
    let d_acc = (acc_model - acc_ref) / acc_ref;
    if d_acc >= 0.0 {
        Ok(weights.alpha * d_len + weights.beta * d_acc.abs())
    } else {
        Ok(weights.alpha * d_len - weights.gamma * d_acc.abs())
    }
}

/// Per-prompt evaluation summary for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prompt_id: usize,
    pub method: String,
    /// Pass rate on this prompt, in [0, 1].
    pub accuracy: f64,
    /// Mean response length on this prompt, in tokens.
    pub mean_length: f64,
}

/// Difficulty tier of a prompt, from hardest (Q1) to easiest (Q4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Q1, Tier::Q2, Tier::Q3, Tier::Q4];

    pub fn index(self) -> usize {
        match self {
            Tier::Q1 => 0,
            Tier::Q2 => 1,
            Tier::Q3 => 2,
            Tier::Q4 => 3,
        }
    }
}

/// Assign difficulty tiers from base-policy pass rates.
///
/// Prompts are ranked by base accuracy ascending (hardest first), ties broken
/// by first-appearance order. Every prompt with pass rate exactly 1 lands in
/// the single easiest tier Q4; the rest are split into Q1..Q3 as equally as
/// possible, with any remainder going to the harder tiers first.
pub fn difficulty_tiers(base_records: &[EvalRecord]) -> Result<Vec<Tier>> {
    if base_records.is_empty() {
        return Err(Error::EmptyInput("difficulty tier records"));
    }
    for r in base_records {
        if !(0.0..=1.0).contains(&r.accuracy) {
            return Err(Error::InvalidConfig("accuracy must lie in [0, 1]"));
        }
    }
    let mut tiers = vec![Tier::Q4; base_records.len()];
    let mut imperfect: Vec<usize> = (0..base_records.len())
        .filter(|&i| base_records[i].accuracy < 1.0)
        .collect();
    // Stable sort keeps first-appearance order among equal accuracies.
    imperfect.sort_by(|&a, &b| base_records[a].accuracy.total_cmp(&base_records[b].accuracy));

    let n = imperfect.len();
    let base = n / 3;
    let rem = n % 3;
    let sizes = [
        base + usize::from(rem >= 1),
        base + usize::from(rem >= 2),
        base,
    ];
    let mut cursor = 0;
    for (tier, &size) in [Tier::Q1, Tier::Q2, Tier::Q3].iter().zip(&sizes) {
        for &idx in &imperfect[cursor..cursor + size] {
            tiers[idx] = *tier;
        }
        cursor += size;
    }
    Ok(tiers)
}

/// Ranks with ties broken by first-appearance order: the position each
/// element takes under a stable sort by value.
fn first_appearance_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    for (position, &idx) in order.iter().enumerate() {
        ranks[idx] = position as f64;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the two rank vectors,
/// with ties broken by first-appearance order in both.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "spearman inputs",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("spearman needs at least two points"));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::ConstantVector);
    }
    let rx = first_appearance_ranks(x);
    let ry = first_appearance_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Per-tier mean length differences; `None` for empty tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierDeltas {
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub q3: Option<f64>,
    pub q4: Option<f64>,
}

impl TierDeltas {
    pub fn get(&self, tier: Tier) -> Option<f64> {
        match tier {
            Tier::Q1 => self.q1,
            Tier::Q2 => self.q2,
            Tier::Q3 => self.q3,
            Tier::Q4 => self.q4,
        }
    }
}

/// Mean per-prompt extra length of method A over method B within each tier:
/// `mean(len_a - len_b)` over the tier's prompts.
///
/// Both record lists must cover the same prompts in the same order, aligned
/// with the tier assignment.
pub fn tier_length_deltas(
    records_a: &[EvalRecord],
    records_b: &[EvalRecord],
    tiers: &[Tier],
) -> Result<TierDeltas> {
    if records_a.len() != records_b.len() || records_a.len() != tiers.len() {
        return Err(Error::LengthMismatch {
            what: "tier delta inputs",
            left: records_a.len(),
            right: records_b.len().min(tiers.len()),
        });
    }
    if records_a.is_empty() {
        return Err(Error::EmptyInput("tier delta records"));
    }
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for ((a, b), &tier) in records_a.iter().zip(records_b).zip(tiers) {
        if a.prompt_id != b.prompt_id {
            return Err(Error::InvalidConfig(
                "tier deltas require the same prompt set in both record lists",
            ));
        }
        sums[tier.index()] += a.mean_length - b.mean_length;
        counts[tier.index()] += 1;
    }
    let delta = |i: usize| {
        if counts[i] > 0 {
            Some(sums[i] / counts[i] as f64)
        } else {
            None
        }
    };
    Ok(TierDeltas {
        q1: delta(0),
        q2: delta(1),
        q3: delta(2),
        q4: delta(3),
    })
}
