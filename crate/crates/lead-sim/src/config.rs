//! JSON run configuration and the simulator-side error type.
//!
//! A config file has five optional sections (`environment`, `method`,
//! `controller`, `surrogate`, `logging`), each falling back to the stated
//! defaults, plus an optional `arms` list for ablation sweeps and a
//! `thresholds` section recording the calibrated pass thresholds used by the
//! acceptance checks. A missing or empty file is a valid all-defaults run.

use std::fs;
use std::path::Path;

use lead_core::controller::ControllerConfig;
use lead_core::env::EnvironmentConfig;
use lead_core::policy::SurrogateConfig;
use lead_core::reward::{Aggregator, TargetLengthPolicy};
use lead_core::trainer::{Method, MethodConfig, PolicyInit};
use serde::{Deserialize, Serialize};

/// Simulator error split by exit code: validation failures exit 1, IO
/// failures exit 2.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl SimError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        SimError::Validation(message.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Validation(_) => 1,
            SimError::Io { .. } => 2,
        }
    }
}

impl From<lead_core::Error> for SimError {
    fn from(err: lead_core::Error) -> Self {
        SimError::Validation(err.to_string())
    }
}

pub type SimResult<T> = Result<T, SimError>;

/// The `method` section: aggregation method plus run-level knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSection {
    /// Optional explicit label for sweep arms and reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub method: Method,
    pub aggregator: Aggregator,
    /// Lower clamp of the calibrated target.
    pub l_min: u32,
    /// Upper clamp / sentinel; must match the environment's `bin_max`.
    pub b_max: u32,
    pub learning_rate: f64,
    pub n_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_prompts: Option<usize>,
    pub policy_init: PolicyInit,
    pub eval_samples: usize,
}

impl Default for MethodSection {
    fn default() -> Self {
        let defaults = MethodConfig::default();
        MethodSection {
            name: None,
            method: defaults.method,
            aggregator: defaults.target.aggregator,
            l_min: defaults.target.l_min,
            b_max: defaults.target.b_max,
            learning_rate: defaults.learning_rate,
            n_steps: defaults.n_steps,
            batch_prompts: defaults.batch_prompts,
            policy_init: defaults.policy_init,
            eval_samples: defaults.eval_samples,
        }
    }
}

impl MethodSection {
    /// Label used for artifacts: the explicit name, or the method name with
    /// the aggregator appended when it differs from the default.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let base = self.method.name();
        if self.aggregator != Aggregator::MeanOfCorrect {
            format!("{base}_{}", aggregator_name(self.aggregator))
        } else {
            base.to_string()
        }
    }
}

fn aggregator_name(aggregator: Aggregator) -> &'static str {
    match aggregator {
        Aggregator::MeanOfCorrect => "mean_of_correct",
        Aggregator::MinOfCorrect => "min_of_correct",
        Aggregator::MedianOfCorrect => "median_of_correct",
        Aggregator::MeanOfAll => "mean_of_all",
    }
}

/// Output file names inside a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoggingConfig {
    pub step_log: String,
    pub summary: String,
    pub environment_csv: String,
    pub base_eval_csv: String,
    pub final_eval_csv: String,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        LoggingConfig {
            step_log: "steps.jsonl".to_string(),
            summary: "summary.json".to_string(),
            environment_csv: "environment.csv".to_string(),
            base_eval_csv: "base_eval.csv".to_string(),
            final_eval_csv: "eval.csv".to_string(),
        }
    }
}

/// Calibrated pass thresholds for the end-to-end compression check on the
/// default environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Final mean length must not exceed this fraction of the initial
    /// policy's expected mean length.
    pub compression_ratio_max: f64,
    /// Allowed gap in final batch accuracy against the correctness-only arm.
    pub accuracy_gap_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            compression_ratio_max: 0.6,
            accuracy_gap_max: 0.02,
        }
    }
}

/// A full run configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub environment: EnvironmentConfig,
    pub method: MethodSection,
    pub controller: ControllerConfig,
    pub surrogate: SurrogateConfig,
    pub logging: LoggingConfig,
    /// Sweep arms; each entry is a `method` section of its own, sharing the
    /// other sections.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub arms: Vec<MethodSection>,
    pub thresholds: Thresholds,
}

impl RunConfig {
    /// Load a config file, treating a missing file as an IO error.
    pub fn load(path: &Path) -> SimResult<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::io(format!("reading config {}", path.display()), e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| SimError::validation(format!("parsing config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> SimResult<()> {
        self.environment.validate()?;
        self.method_config(&self.method).validate()?;
        for arm in &self.arms {
            self.method_config(arm).validate()?;
        }
        Ok(())
    }

    /// Assemble the core method configuration for one method section.
    pub fn method_config(&self, section: &MethodSection) -> MethodConfig {
        MethodConfig {
            method: section.method,
            target: TargetLengthPolicy {
                aggregator: section.aggregator,
                l_min: section.l_min,
                b_max: section.b_max,
            },
            controller: self.controller,
            surrogate: self.surrogate,
            learning_rate: section.learning_rate,
            n_steps: section.n_steps,
            batch_prompts: section.batch_prompts,
            policy_init: section.policy_init,
            eval_samples: section.eval_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let config: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, RunConfig::default());
        assert!(config.validate().is_ok());
        assert_eq!(config.method.method.name(), "lead");
        assert_eq!(config.environment.n_prompts, 100);
        assert_eq!(config.controller.lambda_min, 0.3);
        assert_eq!(config.surrogate.clip_ratio, 0.2);
    }

    #[test]
    fn method_kind_and_overrides_parse() {
        let text = r#"{
            "method": {
                "kind": "global_budget",
                "budget": 1500,
                "n_steps": 50,
                "aggregator": "min_of_correct"
            },
            "environment": {"n_prompts": 10},
            "controller": {"lambda_min": 0.25}
        }"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        match config.method.method {
            Method::GlobalBudget { budget, .. } => assert_eq!(budget, 1500),
            other => panic!("unexpected method {other:?}"),
        }
        assert_eq!(config.method.n_steps, 50);
        assert_eq!(config.method.aggregator, Aggregator::MinOfCorrect);
        assert_eq!(config.controller.lambda_min, 0.25);
        assert_eq!(config.environment.n_prompts, 10);
    }

    #[test]
    fn labels_distinguish_aggregator_arms() {
        let mut section = MethodSection::default();
        assert_eq!(section.label(), "lead");
        section.aggregator = Aggregator::MeanOfAll;
        assert_eq!(section.label(), "lead_mean_of_all");
        section.name = Some("custom".to_string());
        assert_eq!(section.label(), "custom");
    }

    #[test]
    fn config_roundtrips_through_json() {
        let config = RunConfig::default();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config, back);
    }
}
