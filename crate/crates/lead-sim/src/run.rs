//! Experiment execution and file artifacts.
//!
//! A run directory contains:
//!
//! - `steps.jsonl` — one step record per line;
//! - `environment.csv` — the prompt population;
//! - `base_eval.csv` / `eval.csv` — per-prompt evaluation of the initial and
//!   trained policy;
//! - `summary.json` — config echo, run id, and final metrics.
//!
//! All artifacts are deterministic byte for byte for a fixed config and seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use lead_core::metrics::{aes, AesWeights, EvalRecord};
use lead_core::trainer::{self, RunOutput};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{MethodSection, RunConfig, SimError, SimResult};

/// Final metrics of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Mean per-prompt pass rate of the trained policy.
    pub eval_accuracy: f64,
    /// Mean per-prompt response length of the trained policy.
    pub eval_mean_length: f64,
    pub base_eval_accuracy: f64,
    pub base_eval_mean_length: f64,
    /// Accuracy-efficiency score against the initial policy, when defined.
    pub sim_aes: Option<f64>,
    /// Last step's batch accuracy / mean length / weights (0 when no steps).
    pub final_batch_accuracy: f64,
    pub final_mean_length: f64,
    pub final_lambda_c: f64,
    pub final_lambda_l: f64,
    /// Steps on which the controller was frozen for lack of solved prompts.
    pub frozen_steps: u64,
}

/// `summary.json` contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    /// Hash of the effective configuration; identical runs share an id.
    pub run_id: String,
    pub method: String,
    pub n_steps: usize,
    pub config: RunConfig,
    pub metrics: RunMetrics,
    /// Final per-prompt bin distributions of the trained policy.
    pub final_policy_bin_probs: Vec<Vec<f64>>,
}

fn mean_of(records: &[EvalRecord], f: impl Fn(&EvalRecord) -> f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

fn write_file(path: &Path, bytes: &[u8]) -> SimResult<()> {
    let mut file = fs::File::create(path)
        .map_err(|e| SimError::io(format!("creating {}", path.display()), e))?;
    file.write_all(bytes)
        .map_err(|e| SimError::io(format!("writing {}", path.display()), e))
}

fn eval_csv(records: &[EvalRecord]) -> SimResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["prompt_id", "method", "accuracy", "mean_length"])
        .map_err(|e| SimError::validation(format!("encoding eval csv: {e}")))?;
    for r in records {
        writer
            .write_record([
                r.prompt_id.to_string(),
                r.method.clone(),
                r.accuracy.to_string(),
                r.mean_length.to_string(),
            ])
            .map_err(|e| SimError::validation(format!("encoding eval csv: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| SimError::validation(format!("encoding eval csv: {e}")))
}

fn environment_csv(output: &RunOutput) -> SimResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["prompt_id", "required_length", "steepness", "ceiling", "bins"])
        .map_err(|e| SimError::validation(format!("encoding environment csv: {e}")))?;
    for p in &output.env {
        let bins = p
            .bin_lengths
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writer
            .write_record([
                p.prompt_id.to_string(),
                p.required_length.to_string(),
                p.steepness.to_string(),
                p.ceiling.to_string(),
                bins,
            ])
            .map_err(|e| SimError::validation(format!("encoding environment csv: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| SimError::validation(format!("encoding environment csv: {e}")))
}

/// Stable short id from the effective configuration.
pub fn run_id(config: &RunConfig, section: &MethodSection) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    hasher.update(serde_json::to_vec(section).expect("method section serializes"));
    let digest = hasher.finalize();
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Execute one run for `section` and write all artifacts into `out_dir`.
pub fn run_experiment(
    config: &RunConfig,
    section: &MethodSection,
    out_dir: &Path,
) -> SimResult<RunSummary> {
    let method_config = config.method_config(section);
    let output = trainer::run(&config.environment, &method_config)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| SimError::io(format!("creating {}", out_dir.display()), e))?;

    let mut jsonl = Vec::new();
    for record in &output.records {
        serde_json::to_writer(&mut jsonl, record)
            .map_err(|e| SimError::validation(format!("encoding step record: {e}")))?;
        jsonl.push(b'\n');
    }
    write_file(&out_dir.join(&config.logging.step_log), &jsonl)?;
    write_file(
        &out_dir.join(&config.logging.environment_csv),
        &environment_csv(&output)?,
    )?;
    write_file(
        &out_dir.join(&config.logging.base_eval_csv),
        &eval_csv(&output.base_eval)?,
    )?;
    write_file(
        &out_dir.join(&config.logging.final_eval_csv),
        &eval_csv(&output.final_eval)?,
    )?;

    let summary = summarize(config, section, &output)?;
    let mut summary_bytes = serde_json::to_vec_pretty(&summary)
        .map_err(|e| SimError::validation(format!("encoding summary: {e}")))?;
    summary_bytes.push(b'\n');
    write_file(&out_dir.join(&config.logging.summary), &summary_bytes)?;
    Ok(summary)
}

fn summarize(
    config: &RunConfig,
    section: &MethodSection,
    output: &RunOutput,
) -> SimResult<RunSummary> {
    let eval_accuracy = mean_of(&output.final_eval, |r| r.accuracy);
    let eval_mean_length = mean_of(&output.final_eval, |r| r.mean_length);
    let base_eval_accuracy = mean_of(&output.base_eval, |r| r.accuracy);
    let base_eval_mean_length = mean_of(&output.base_eval, |r| r.mean_length);
    let sim_aes = aes(
        eval_accuracy,
        eval_mean_length,
        base_eval_accuracy,
        base_eval_mean_length,
        &AesWeights::default(),
    )
    .ok();
    let last = output.records.last();
    let metrics = RunMetrics {
        eval_accuracy,
        eval_mean_length,
        base_eval_accuracy,
        base_eval_mean_length,
        sim_aes,
        final_batch_accuracy: last.map_or(0.0, |r| r.batch_accuracy),
        final_mean_length: last.map_or(0.0, |r| r.mean_length),
        final_lambda_c: last.map_or(0.0, |r| r.lambda_c),
        final_lambda_l: last.map_or(0.0, |r| r.lambda_l),
        frozen_steps: output.frozen_steps,
    };
    let final_policy_bin_probs = (0..output.final_params.n_prompts())
        .map(|q| output.final_params.probs(q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunSummary {
        run_id: run_id(config, section),
        method: section.label(),
        n_steps: section.n_steps,
        config: config.clone(),
        metrics,
        final_policy_bin_probs,
    })
}

/// One row of a sweep comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub arm: String,
    pub accuracy: f64,
    pub mean_length: f64,
    pub aes: Option<f64>,
}

/// Run every arm with the shared environment seed and write a comparison
/// table plus one run directory per arm.
pub fn ablation_sweep(config: &RunConfig, out_dir: &Path) -> SimResult<Vec<SweepRow>> {
    if config.arms.len() < 2 {
        return Err(SimError::validation(
            "a sweep needs at least two arms in the config's `arms` list",
        ));
    }
    let mut labels = std::collections::BTreeSet::new();
    let mut rows = Vec::new();
    for (index, arm) in config.arms.iter().enumerate() {
        let mut label = arm.label();
        if !labels.insert(label.clone()) {
            label = format!("{label}_{index:02}");
            labels.insert(label.clone());
        }
        let summary = run_experiment(config, arm, &out_dir.join(&label))?;
        rows.push(SweepRow {
            arm: label,
            accuracy: summary.metrics.eval_accuracy,
            mean_length: summary.metrics.eval_mean_length,
            aes: summary.metrics.sim_aes,
        });
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["arm", "accuracy", "mean_length", "aes"])
        .map_err(|e| SimError::validation(format!("encoding sweep csv: {e}")))?;
    for row in &rows {
        writer
            .write_record([
                row.arm.clone(),
                row.accuracy.to_string(),
                row.mean_length.to_string(),
                row.aes.map_or_else(String::new, |v| v.to_string()),
            ])
            .map_err(|e| SimError::validation(format!("encoding sweep csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| SimError::validation(format!("encoding sweep csv: {e}")))?;
    write_file(&out_dir.join("sweep.csv"), &bytes)?;
    Ok(rows)
}
