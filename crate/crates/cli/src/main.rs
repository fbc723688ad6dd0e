use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use slicectl_core::experiments::{
    run_oracle_table, run_scenario1, run_scenario2, run_token_comparison, write_oracle_table,
    write_scenario1, write_scenario2, write_tokens, BackendChoice,
};
use slicectl_core::{Error, ExperimentConfig, RagStore, Result};

#[derive(Parser)]
#[command(
    name = "slicectl",
    version,
    about = "SLA-gated RAN slice resource allocation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous run under the stepped traffic timeline.
    Scenario1 {
        #[command(flatten)]
        common: Common,
        /// Call the allocation backend every cycle instead of only on violations.
        #[arg(long)]
        no_gate: bool,
        /// Persist the experience store as JSON lines at this path.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Repeated trials at random grid rates: adaptive policy against fixed splits.
    Scenario2 {
        #[command(flatten)]
        common: Common,
        /// Number of trials (defaults to the config value).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cumulative token use with and without the detection gate.
    Tokens {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive split table from an empty system.
    OracleTable {
        #[command(flatten)]
        common: Common,
        /// Offered rate per slice in Mbps, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Override the number of resource blocks.
        #[arg(long)]
        total_rbs: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Oracle,
    Scripted,
    Remote,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the bundled config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    /// Decision script for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::bundled(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }

    fn backend(&self) -> Result<BackendChoice> {
        Ok(match self.backend {
            BackendKind::Oracle => BackendChoice::Oracle,
            BackendKind::Remote => BackendChoice::Remote,
            BackendKind::Scripted => {
                BackendChoice::Scripted(self.script.clone().ok_or_else(|| {
                    Error::Argument("--backend scripted needs --script <path>".into())
                })?)
            }
        })
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Scenario1 {
            common,
            no_gate,
            store,
        } => {
            let cfg = common.config()?;
            let mut backend = common.backend()?.build(&cfg)?;
            let mut store = match store {
                Some(p) => RagStore::open(p, cfg.slice_count())?,
                None => RagStore::in_memory(cfg.slice_count()),
            }
            .with_shortlist_multiplier(cfg.control.shortlist_multiplier);
            let result = run_scenario1(&cfg, backend.as_mut(), !no_gate, &mut store)?;
            write_scenario1(&common.out, &cfg, &result)?;
            Ok(json!({
                "out": common.out,
                "cycles": result.summary.cycles,
                "backend_calls": result.summary.backend_calls,
                "reallocations": result.summary.reallocations,
                "tokens": result.summary.tokens.total(),
            }))
        }
        Command::Scenario2 { common, trials } => {
            let cfg = common.config()?;
            let trials = trials.unwrap_or(cfg.scenario2.trials);
            let result = run_scenario2(&cfg, trials, &common.backend()?)?;
            write_scenario2(&common.out, &cfg, &result)?;
            let policies: Vec<_> = result
                .policies
                .iter()
                .map(|p| {
                    json!({
                        "policy": p.policy,
                        "mean_drop": p.mean_drop,
                        "max_trial_drop": p.max_trial_drop,
                        "latency_p95_ms": p.latency_p95_ms,
                    })
                })
                .collect();
            Ok(json!({ "out": common.out, "trials": trials, "policies": policies }))
        }
        Command::Tokens { common } => {
            let cfg = common.config()?;
            let (cmp, gated, _) = run_token_comparison(&cfg, &common.backend()?)?;
            write_tokens(&common.out, &cfg, &cmp, &gated)?;
            Ok(json!({
                "out": common.out,
                "gated_total": cmp.gated.last().map(|t| t.total()),
                "ungated_total": cmp.ungated.last().map(|t| t.total()),
                "gated_calls": cmp.gated_calls,
                "ungated_calls": cmp.ungated_calls,
            }))
        }
        Command::OracleTable {
            common,
            rates,
            total_rbs,
        } => {
            let mut cfg = common.config()?;
            if let Some(n) = total_rbs {
                cfg.radio.total_rbs = n;
            }
            let result = run_oracle_table(&cfg, &rates)?;
            write_oracle_table(&common.out, &cfg, &result)?;
            Ok(json!({
                "out": common.out,
                "rb_counts": result.rb_counts,
                "feasible": result.feasible,
                "objective": result.objective,
            }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
