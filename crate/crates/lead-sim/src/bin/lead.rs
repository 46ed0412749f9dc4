//! Command-line entry point for the training simulator.
//!
//! Subcommands:
//!
//! - `train`          run one experiment from a JSON config
//! - `sweep`          run every arm in the config's `arms` list
//! - `verify-tables`  recompute published accuracy-efficiency scores
//! - `analyze`        difficulty tiers, rank correlations, per-tier deltas
//! - `demo-collapse`  print the scalarized weight-cancellation demonstration
//!
//! Exit codes: 0 success, 1 validation failure, 2 IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use lead_core::advantage::{combine_and_whiten, decoupled_advantages, scalarized_advantage};
use lead_core::metrics::AesWeights;
use lead_core::rng::{derive_stream, uniform_f64};
use lead_core::trainer::Method;
use lead_sim::analyze::analyze_dirs;
use lead_sim::config::{RunConfig, SimError, SimResult};
use lead_sim::run::{ablation_sweep, run_experiment};
use lead_sim::tables::{format_report, verify_paper_tables, DEFAULT_TOLERANCE};

#[derive(Parser)]
#[command(
    name = "lead",
    about = "Desk-scale training simulator for length-efficient reasoning reward aggregation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment and write its artifacts.
    Train {
        /// JSON config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the run artifacts.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's method kind (lead, lead-static,
        /// grpo-scalarized, grpo-correctness-only, global-budget).
        #[arg(long)]
        method: Option<String>,
    },
    /// Run every arm in the config's `arms` list with the shared seed.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the published accuracy-efficiency scores from a table
    /// transcription (bundled one when --csv is omitted).
    VerifyTables {
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Optional directory for the JSON verification report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Difficulty tiers, rank correlations, per-tier length deltas, and
    /// accuracy-efficiency scores for a run/baseline pair.
    Analyze {
        /// Run directory (its base_eval.csv defines difficulty).
        #[arg(long)]
        run: PathBuf,
        /// Baseline run directory sharing the same environment and seed.
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, default_value = "runs/analysis")]
        out: PathBuf,
    },
    /// Demonstrate the scalarized weight-cancellation pathology on random
    /// homogeneous groups, against the decoupled route.
    DemoCollapse {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of random groups to show.
        #[arg(long, default_value_t = 4)]
        groups: usize,
    },
}

fn parse_method(name: &str) -> SimResult<Method> {
    match name.replace('-', "_").as_str() {
        "lead" => Ok(Method::Lead),
        "lead_static" => Ok(Method::LeadStatic {
            lambda_correct: 0.5,
            lambda_length: 0.5,
        }),
        "grpo" | "grpo_scalarized" => Ok(Method::GrpoScalarized {
            lambda_correct: 0.5,
            lambda_length: 0.5,
        }),
        "grpo_correctness_only" => Ok(Method::GrpoCorrectnessOnly),
        "global_budget" => Ok(Method::GlobalBudget {
            budget: 1000,
            lambda_correct: 0.5,
            lambda_length: 0.5,
        }),
        other => Err(SimError::validation(format!(
            "unknown method '{other}' (expected lead, lead-static, grpo-scalarized, \
             grpo-correctness-only, or global-budget)"
        ))),
    }
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> SimResult<RunConfig> {
    let mut config = match path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.environment.seed = seed;
    }
    Ok(config)
}

fn cmd_train(
    config_path: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    method: Option<String>,
) -> SimResult<()> {
    let mut config = load_config(config_path.as_ref(), seed)?;
    if let Some(name) = method {
        let wanted = parse_method(&name)?;
        if config.method.method.name() != wanted.name() {
            config.method.method = wanted;
        }
        config.validate()?;
    }
    let section = config.method.clone();
    let summary = run_experiment(&config, &section, &out)?;
    println!(
        "run {} ({}) finished: {} steps, eval accuracy {:.4}, eval mean length {:.1}, aes {}",
        summary.run_id,
        summary.method,
        summary.n_steps,
        summary.metrics.eval_accuracy,
        summary.metrics.eval_mean_length,
        summary
            .metrics
            .sim_aes
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}")),
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_sweep(config_path: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> SimResult<()> {
    let config = load_config(config_path.as_ref(), seed)?;
    let rows = ablation_sweep(&config, &out)?;
    println!("{:<28} {:>10} {:>12} {:>8}", "arm", "accuracy", "mean_length", "aes");
    for row in &rows {
        println!(
            "{:<28} {:>10.4} {:>12.1} {:>8}",
            row.arm,
            row.accuracy,
            row.mean_length,
            row.aes.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}")),
        );
    }
    println!("sweep table in {}", out.join("sweep.csv").display());
    Ok(())
}

fn cmd_verify_tables(
    csv: Option<PathBuf>,
    out: Option<PathBuf>,
    tolerance: f64,
) -> SimResult<()> {
    let report = verify_paper_tables(csv.as_deref(), &AesWeights::default(), tolerance)?;
    print!("{}", format_report(&report));
    if let Some(out) = out {
        std::fs::create_dir_all(&out)
            .map_err(|e| SimError::io(format!("creating {}", out.display()), e))?;
        let path = out.join("verify_tables.json");
        let mut bytes = serde_json::to_vec_pretty(&report)
            .map_err(|e| SimError::validation(format!("encoding report: {e}")))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)
            .map_err(|e| SimError::io(format!("writing {}", path.display()), e))?;
        println!("report written to {}", path.display());
    }
    if report.all_pass {
        Ok(())
    } else {
        Err(SimError::validation(
            "table verification failed for at least one row",
        ))
    }
}

fn cmd_analyze(run: PathBuf, baseline: PathBuf, out: PathBuf) -> SimResult<()> {
    let report = analyze_dirs(&run, &baseline, &out, &AesWeights::default())?;
    println!(
        "tiers (hard to easy): Q1={} Q2={} Q3={} Q4={}",
        report.tier_sizes.q1, report.tier_sizes.q2, report.tier_sizes.q3, report.tier_sizes.q4
    );
    let fmt_rho = |r: Option<f64>| r.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.3}"));
    println!(
        "spearman(difficulty, length): base {}, {} {}, {} {}",
        fmt_rho(report.spearman_base),
        report.run_method,
        fmt_rho(report.spearman_run),
        report.baseline_method,
        fmt_rho(report.spearman_baseline),
    );
    for (tier, delta) in ["Q1", "Q2", "Q3", "Q4"].iter().zip([
        report.tier_deltas.q1,
        report.tier_deltas.q2,
        report.tier_deltas.q3,
        report.tier_deltas.q4,
    ]) {
        match delta {
            Some(d) => println!("delta length {tier}: {d:+.1} tokens"),
            None => println!("delta length {tier}: empty tier"),
        }
    }
    let fmt_aes = |r: Option<f64>| r.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.3}"));
    println!(
        "aes vs base: {} {}, {} {}",
        report.run_method,
        fmt_aes(report.run_aes),
        report.baseline_method,
        fmt_aes(report.baseline_aes),
    );
    println!("analysis written to {}", out.display());
    Ok(())
}

fn cmd_demo_collapse(seed: u64, n_groups: usize) -> SimResult<()> {
    let lambdas = [0.01, 0.1, 1.0, 10.0];
    let mut rng = derive_stream(seed, &[0xDE_C0]);
    println!("scalarized aggregation: z-scores of (1 * r_c + w * r_len) per group\n");
    let mut worst_spread = 0.0f64;
    for index in 0..n_groups {
        let all_correct = index % 2 == 0;
        let group_size = 2 + (uniform_f64(&mut rng) * 15.0) as usize;
        let r_correct = if all_correct { 1.0 } else { 0.0 };
        let r_length: Vec<f64> = (0..group_size)
            .map(|_| 2.0 * uniform_f64(&mut rng) - 1.0)
            .collect();
        println!(
            "group {index}: {} G={group_size}",
            if all_correct { "all-correct" } else { "all-incorrect" }
        );
        println!(
            "  r_len      = [{}]",
            r_length
                .iter()
                .map(|v| format!("{v:+.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let mut reference: Option<Vec<f64>> = None;
        for w in lambdas {
            let combined: Vec<f64> = r_length.iter().map(|r| r_correct + w * r).collect();
            let adv = scalarized_advantage(&combined, 0.0);
            println!(
                "  w={w:<5} A = [{}]",
                adv.iter()
                    .map(|v| format!("{v:+.4}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            if let Some(reference) = &reference {
                let spread = adv
                    .iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_spread = worst_spread.max(spread);
            } else {
                reference = Some(adv);
            }
        }
        println!();
    }
    println!(
        "max elementwise deviation across weight settings: {worst_spread:.2e} \
         (the weight cancels inside group normalization)"
    );

    // Decoupled route: with the length weight at zero, rescaling the length
    // rewards cannot change the combined advantage.
    let mut rng = derive_stream(seed, &[0xDEC0 + 1]);
    let group_size = 6;
    let mk_group = |scale: f64, rng: &mut lead_core::rng::Stream| {
        let correct: Vec<bool> = (0..group_size).map(|j| j % 2 == 0).collect();
        lead_core::advantage::RolloutGroup {
            prompt_id: 0,
            lengths: vec![1000; group_size],
            correct: correct.clone(),
            bin_indices: vec![0; group_size],
            logprob_old: vec![0.0; group_size],
            rewards: correct
                .iter()
                .map(|&c| lead_core::reward::RewardVector {
                    r_correct: if c { 1.0 } else { 0.0 },
                    r_length: scale * (2.0 * uniform_f64(rng) - 1.0),
                })
                .collect(),
        }
    };
    let base_group = mk_group(1.0, &mut rng);
    let mut scaled_group = base_group.clone();
    for r in &mut scaled_group.rewards {
        r.r_length *= 1000.0;
    }
    let mut base_channels = vec![decoupled_advantages(&base_group, 0.0)];
    let mut scaled_channels = vec![decoupled_advantages(&scaled_group, 0.0)];
    combine_and_whiten(&mut base_channels, (1.0, 0.0), 0.0)?;
    combine_and_whiten(&mut scaled_channels, (1.0, 0.0), 0.0)?;
    let identical = base_channels[0].a_combined == scaled_channels[0].a_combined;
    println!(
        "decoupled route, weights (1, 0): scaling r_len by 1000 leaves the combined \
         advantage bit-identical: {identical}"
    );
    Ok(())
}

fn execute(cli: Cli) -> SimResult<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            method,
        } => cmd_train(config, out, seed, method),
        Command::Sweep { config, out, seed } => cmd_sweep(config, out, seed),
        Command::VerifyTables { csv, out, tolerance } => cmd_verify_tables(csv, out, tolerance),
        Command::Analyze { run, baseline, out } => cmd_analyze(run, baseline, out),
        Command::DemoCollapse { seed, groups } => cmd_demo_collapse(seed, groups),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            // Usage errors (unknown subcommand or flag) exit 1.
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
