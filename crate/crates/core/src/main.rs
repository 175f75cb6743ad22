use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, warn};

use slacer::config::ExperimentConfig;
use slacer::experiment::run_experiment;
use slacer::presets::{describe, preset, PRESET_NAMES};
use slacer::verify::{oracle_equivalence, structural_fuzz};

/// Simulator for the SLAC/SLACER cooperative overlay protocols.
#[derive(Parser)]
#[command(name = "slacer-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a preset or a config file.
    Run(Box<RunArgs>),
    /// Check fast metrics against brute force and fuzz structural invariants.
    Verify {
        #[arg(long, default_value_t = 500)]
        graphs: usize,
        #[arg(long, default_value_t = 100_000)]
        operations: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// List available presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    mr: Option<String>,
    #[arg(long)]
    view_size: Option<String>,
    /// semi | full
    #[arg(long)]
    mode: Option<String>,
    /// oracle | gossip
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    max_cycles: Option<String>,
    /// Cooperation fraction that ends a run, or "none".
    #[arg(long)]
    stop_coop: Option<String>,
    #[arg(long)]
    metrics_interval: Option<String>,
    #[arg(long)]
    churn_fraction: Option<String>,
    /// Cycle of the first churn event, or "converged".
    #[arg(long)]
    churn_at: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep one key: `--sweep w=0.5,0.7,0.9`.
    #[arg(long)]
    sweep: Option<String>,
    /// Any config key: `--set key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    charts: bool,
    #[arg(long)]
    export_graph: bool,
    /// Exit nonzero if any run exhausts its cycle budget.
    #[arg(long)]
    strict: bool,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out: Vec<(String, String)> = [
            ("n", &self.n),
            ("w", &self.w),
            ("m", &self.m),
            ("mr", &self.mr),
            ("view_size", &self.view_size),
            ("mode", &self.mode),
            ("sampler", &self.sampler),
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("max_cycles", &self.max_cycles),
            ("stop_coop", &self.stop_coop),
            ("metrics_interval", &self.metrics_interval),
            ("churn_fraction", &self.churn_fraction),
            ("churn_at", &self.churn_at),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
        if let Some(out_dir) = &self.out {
            out.push(("out".into(), out_dir.to_string_lossy().into_owned()));
        }
        if let Some(sweep) = &self.sweep {
            let (k, v) =
                sweep.split_once('=').ok_or_else(|| format!("--sweep expects KEY=V1,V2,..., got `{sweep}`"))?;
            out.push(("sweep_key".into(), k.trim().into()));
            out.push(("sweep_values".into(), v.into()));
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            out.push((k.trim().into(), v.into()));
        }
        if self.charts {
            out.push(("charts".into(), "true".into()));
        }
        if self.export_graph {
            out.push(("export_graph".into(), "true".into()));
        }
        Ok(out)
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), _) => preset(name).map_err(|e| e.to_string())?,
        (None, Some(path)) => ExperimentConfig::from_file(path).map_err(|e| e.to_string())?,
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    let mut problems = Vec::new();
    for (k, v) in args.overrides()? {
        if let Err(e) = config.set(&k, &v) {
            problems.push(e);
        }
    }
    if !problems.is_empty() {
        return Err(format!("invalid overrides:\n  - {}", problems.join("\n  - ")));
    }
    for w in config.warnings() {
        warn!("{w}");
    }
    let summary = run_experiment(&config).map_err(|e| e.to_string())?;

    for p in &summary.points {
        let label = p.label.as_ref().map_or(String::new(), |(k, v)| format!("{k}={v} "));
        let conv = p.convergence_stat();
        let converged = p.runs.iter().filter(|r| r.convergence_cycle.is_some()).count();
        let fmt = |name: &str| p.final_stat(name).map_or("-".to_string(), |s| format!("{:.4}", s.mean));
        println!(
            "{label}runs={} converged={} cycles={} coop={} ccp={} gcc={} C={} L={}",
            p.runs.len(),
            converged,
            conv.map_or("-".to_string(), |s| format!("{:.1}", s.mean)),
            fmt("coop_fraction"),
            fmt("ccp"),
            fmt("gcc_fraction"),
            fmt("clustering"),
            fmt("avg_path_length"),
        );
        if let Some(r) = p.recovery_stat() {
            println!("{label}churn recovery cycles={:.1}", r.mean);
        }
    }
    if let Some(dir) = &config.output_path {
        println!("wrote {}", dir.display());
    }
    let failures = summary.budget_failures();
    if !failures.is_empty() {
        warn!("{} run(s) hit the cycle budget: {}", failures.len(), failures.join(", "));
        if args.strict {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(graphs: usize, operations: u64, seed: u64) -> ExitCode {
    let oracle = oracle_equivalence(graphs, 2, 60, seed);
    println!(
        "{} oracle equivalence: {} graphs, {} CCP and {} CCPL mismatches",
        if oracle.passed() { "PASS" } else { "FAIL" },
        oracle.graphs,
        oracle.ccp_mismatches.len(),
        oracle.ccpl_mismatches.len()
    );
    let fuzz = structural_fuzz(operations, seed);
    match &fuzz {
        Ok(r) => println!(
            "PASS structural invariants: {} operations, {} cycles and {} comparisons checked",
            r.operations, r.cycles_checked, r.adapts_checked
        ),
        Err(e) => println!("FAIL structural invariants: {e}"),
    }
    if oracle.passed() && fuzz.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(*args).unwrap_or_else(|e| {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }),
        Command::Verify { graphs, operations, seed } => verify(graphs, operations, seed),
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name:<22} {}", describe(name).unwrap_or_default());
            }
            ExitCode::SUCCESS
        }
    }
}
