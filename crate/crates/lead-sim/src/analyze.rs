//! Post-run analysis: difficulty tiers, rank correlation, per-tier length
//! deltas, and accuracy-efficiency scores from run artifacts.
//!
//! Difficulty is defined from the initial ("base") policy's per-prompt pass
//! rate, `diff = 1 - base_accuracy`, so it does not depend on the method
//! being scored. Rank correlations are computed at prompt granularity.

use std::fs;
use std::path::Path;

use lead_core::metrics::{
    aes, difficulty_tiers, spearman_rho, tier_length_deltas, AesWeights, EvalRecord, Tier,
    TierDeltas,
};
use serde::{Deserialize, Serialize};

use crate::config::{SimError, SimResult};

/// Read one `eval.csv` / `base_eval.csv` artifact.
pub fn load_eval_csv(path: &Path) -> SimResult<Vec<EvalRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| SimError::io(format!("reading eval csv {}", path.display()), e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let records = reader
        .deserialize()
        .collect::<Result<Vec<EvalRecord>, _>>()
        .map_err(|e| SimError::validation(format!("malformed eval csv {}: {e}", path.display())))?;
    if records.is_empty() {
        return Err(SimError::validation(format!(
            "eval csv {} has no rows",
            path.display()
        )));
    }
    Ok(records)
}

/// Pooled (per-prompt, equally weighted) summary of one record set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PooledStats {
    pub accuracy: f64,
    pub mean_length: f64,
}

fn pooled(records: &[EvalRecord]) -> PooledStats {
    let n = records.len() as f64;
    PooledStats {
        accuracy: records.iter().map(|r| r.accuracy).sum::<f64>() / n,
        mean_length: records.iter().map(|r| r.mean_length).sum::<f64>() / n,
    }
}

/// Per-tier prompt counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TierSizes {
    pub q1: usize,
    pub q2: usize,
    pub q3: usize,
    pub q4: usize,
}

/// Everything `analyze` derives from a run/baseline pair.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub run_method: String,
    pub baseline_method: String,
    pub tier_sizes: TierSizes,
    /// Spearman rank correlation between base difficulty and per-prompt mean
    /// length, for the base policy and the two trained policies. `None` when
    /// undefined (constant inputs).
    pub spearman_base: Option<f64>,
    pub spearman_run: Option<f64>,
    pub spearman_baseline: Option<f64>,
    /// Mean per-prompt extra tokens of the run over the baseline, per tier.
    pub tier_deltas: TierDeltas,
    pub run_pooled: PooledStats,
    pub baseline_pooled: PooledStats,
    pub base_pooled: PooledStats,
    /// AES of run and baseline against the shared base policy.
    pub run_aes: Option<f64>,
    pub baseline_aes: Option<f64>,
}

fn check_same_prompts(a: &[EvalRecord], b: &[EvalRecord], what: &str) -> SimResult<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.prompt_id != y.prompt_id) {
        return Err(SimError::validation(format!(
            "{what}: evaluation records cover different prompt sets"
        )));
    }
    Ok(())
}

/// Compare a run against a baseline sharing the same environment and base
/// evaluation.
pub fn analyze_records(
    base: &[EvalRecord],
    run: &[EvalRecord],
    baseline: &[EvalRecord],
    weights: &AesWeights,
) -> SimResult<AnalysisReport> {
    check_same_prompts(base, run, "base vs run")?;
    check_same_prompts(base, baseline, "base vs baseline")?;

    let tiers = difficulty_tiers(base)?;
    let count = |tier: Tier| tiers.iter().filter(|&&t| t == tier).count();
    let difficulty: Vec<f64> = base.iter().map(|r| 1.0 - r.accuracy).collect();
    let lengths = |records: &[EvalRecord]| -> Vec<f64> {
        records.iter().map(|r| r.mean_length).collect()
    };
    let rho = |ys: &[f64]| spearman_rho(&difficulty, ys).ok();

    let base_pooled = pooled(base);
    let run_pooled = pooled(run);
    let baseline_pooled = pooled(baseline);
    let score = |p: &PooledStats| {
        aes(
            p.accuracy,
            p.mean_length,
            base_pooled.accuracy,
            base_pooled.mean_length,
            weights,
        )
        .ok()
    };

    Ok(AnalysisReport {
        run_method: run[0].method.clone(),
        baseline_method: baseline[0].method.clone(),
        tier_sizes: TierSizes {
            q1: count(Tier::Q1),
            q2: count(Tier::Q2),
            q3: count(Tier::Q3),
            q4: count(Tier::Q4),
        },
        spearman_base: rho(&lengths(base)),
        spearman_run: rho(&lengths(run)),
        spearman_baseline: rho(&lengths(baseline)),
        tier_deltas: tier_length_deltas(run, baseline, &tiers)?,
        run_pooled,
        baseline_pooled,
        base_pooled,
        run_aes: score(&run_pooled),
        baseline_aes: score(&baseline_pooled),
    })
}

/// Per-prompt tier table written next to the analysis report.
fn tiers_csv(
    base: &[EvalRecord],
    run: &[EvalRecord],
    baseline: &[EvalRecord],
    tiers: &[Tier],
) -> SimResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "prompt_id",
            "base_accuracy",
            "difficulty",
            "tier",
            "run_length",
            "baseline_length",
            "delta",
        ])
        .map_err(|e| SimError::validation(format!("encoding tiers csv: {e}")))?;
    for (((b, r), s), tier) in base.iter().zip(run).zip(baseline).zip(tiers) {
        writer
            .write_record([
                b.prompt_id.to_string(),
                b.accuracy.to_string(),
                (1.0 - b.accuracy).to_string(),
                format!("Q{}", tier.index() + 1),
                r.mean_length.to_string(),
                s.mean_length.to_string(),
                (r.mean_length - s.mean_length).to_string(),
            ])
            .map_err(|e| SimError::validation(format!("encoding tiers csv: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| SimError::validation(format!("encoding tiers csv: {e}")))
}

/// Analyze two run directories (the run's own `base_eval.csv` provides the
/// difficulty reference) and write `analysis.json` and `tiers.csv` into
/// `out_dir`.
pub fn analyze_dirs(
    run_dir: &Path,
    baseline_dir: &Path,
    out_dir: &Path,
    weights: &AesWeights,
) -> SimResult<AnalysisReport> {
    let base = load_eval_csv(&run_dir.join("base_eval.csv"))?;
    let run = load_eval_csv(&run_dir.join("eval.csv"))?;
    let baseline = load_eval_csv(&baseline_dir.join("eval.csv"))?;
    let report = analyze_records(&base, &run, &baseline, weights)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| SimError::io(format!("creating {}", out_dir.display()), e))?;
    let tiers = difficulty_tiers(&base)?;
    let csv_bytes = tiers_csv(&base, &run, &baseline, &tiers)?;
    fs::write(out_dir.join("tiers.csv"), csv_bytes)
        .map_err(|e| SimError::io("writing tiers.csv", e))?;
    let mut json = serde_json::to_vec_pretty(&report)
        .map_err(|e| SimError::validation(format!("encoding analysis report: {e}")))?;
    json.push(b'\n');
    fs::write(out_dir.join("analysis.json"), json)
        .map_err(|e| SimError::io("writing analysis.json", e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(prompt_id: usize, method: &str, accuracy: f64, mean_length: f64) -> EvalRecord {
        EvalRecord {
            prompt_id,
            method: method.to_string(),
            accuracy,
            mean_length,
        }
    }

    #[test]
    fn analyze_produces_tiers_and_deltas() {
        let base: Vec<EvalRecord> = (0..8)
            .map(|i| record(i, "base", i as f64 / 8.0, 1000.0 + 300.0 * i as f64))
            .collect();
        let run: Vec<EvalRecord> = (0..8)
            .map(|i| record(i, "lead", 0.5, 900.0 + 350.0 * i as f64))
            .collect();
        let baseline: Vec<EvalRecord> = (0..8)
            .map(|i| record(i, "global_budget", 0.4, 800.0))
            .collect();
        let report =
            analyze_records(&base, &run, &baseline, &AesWeights::default()).unwrap();
        assert_eq!(report.tier_sizes.q1, 3);
        assert_eq!(report.tier_sizes.q4, 0);
        // Base lengths grow with index while difficulty falls: perfect
        // anti-correlation.
        assert_eq!(report.spearman_base, Some(-1.0));
        assert!(report.tier_deltas.q1.is_some());
        assert!(report.run_aes.is_some());
    }

    #[test]
    fn prompt_mismatch_is_rejected() {
        let base = vec![record(0, "base", 0.5, 1000.0), record(1, "base", 0.7, 1200.0)];
        let mut run = base.clone();
        run[1].prompt_id = 5;
        let err = analyze_records(&base, &run, &base, &AesWeights::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
