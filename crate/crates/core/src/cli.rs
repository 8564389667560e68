//! Command-line driver.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use crate::config::{desk_scale, parse_config, preset, ExperimentSpec, PRESETS};
use crate::engine::{run_experiment, run_trial, ExperimentResult};
use crate::output::{all_bounds_pass, trace_file_name, trace_json, write_outputs, Manifest};

const LONG_ABOUT: &str = "\
Runs decentralized multi-agent bandit experiments and writes regret.csv, \
fik.csv, bounds.json and manifest.json to the output directory.

Config defaults: trials = 1, seed = 0, rewards.kind = \"gaussian\", \
rewards.sigma2 = 2, means n_options-1 .. 0 (unit spacing), \
exploration.gamma = 1.5, exploration.eta = 0.1, prior = normal(0, 1), \
comm.kind = \"none\". The sub-Gaussian scale defaults to d² = 4·sigma2 \
(interval² for bounded rewards).

Presets: full, full-er, full-ucb, full-nocomm, desk, desk-er, desk-ucb, desk-nocomm. \
Presets use a normal prior centered on their mean range with sd sqrt(sigma2).";

/// Exit code when `--assert-bounds` is set and a bound check fails.
pub const EXIT_BOUND_FAILURE: i32 = 3;

#[derive(Debug, Clone, Parser)]
#[command(name = "dmamab", version, about = "Decentralized multi-agent bandit experiments", long_about = LONG_ABOUT)]
pub struct Args {
    /// Experiment file (TOML, or a JSON run manifest).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit nonzero if any regret bound check fails.
    #[arg(long)]
    pub assert_bounds: bool,
    /// Shrink the experiment to 5 agents, 10 options, T = 10000, 20 trials.
    #[arg(long)]
    pub desk_scale: bool,
    /// Also write the full trace of trial 0 of every run.
    #[arg(long)]
    pub dump_trace: bool,
    /// Worker threads for running trials (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// List presets and exit.
    #[arg(long)]
    pub list_presets: bool,
}

pub struct Outcome {
    pub spec: ExperimentSpec,
    pub results: Vec<ExperimentResult>,
    pub manifest: Manifest,
    pub bounds_pass: bool,
}

pub fn resolve_spec(args: &Args) -> Result<ExperimentSpec> {
    let spec = match (&args.config, &args.preset) {
        (Some(path), None) => parse_config(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!("one of --config or --preset is required"),
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
    };
    let spec = if args.desk_scale { desk_scale(spec) } else { spec };
    let spec = spec.with_overrides(args.trials, args.seed);
    spec.validate()?;
    Ok(spec)
}

fn execute(args: &Args, spec: ExperimentSpec) -> Result<Outcome> {
    let mut results = Vec::new();
    let mut extra = Vec::new();
    for config in spec.runs() {
        let label = format!("{} {}", config.comm.name(), config.comm.sweep_value());
        results.push(run_experiment(&config).with_context(|| format!("run {label}"))?);
        if args.dump_trace {
            let out = run_trial(&config, 0)?;
            let trace = out.trace.expect("run_trial records a trace");
            let snapshots = out.agents.iter().map(|a| a.snapshot()).collect();
            let name = trace_file_name(config.comm.name(), config.comm.sweep_value());
            extra.push((
                name,
                trace_json(config.comm.name(), config.comm.sweep_value(), 0, &trace, snapshots)?,
            ));
        }
    }
    let manifest = write_outputs(&args.out, &spec, &results, extra)?;
    let bounds_pass = all_bounds_pass(&results);
    Ok(Outcome {
        spec,
        results,
        manifest,
        bounds_pass,
    })
}

/// Resolves the experiment, runs it and writes the output files.
pub fn run(args: &Args) -> Result<Outcome> {
    let spec = resolve_spec(args)?;
    match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| execute(args, spec))
        }
        None => execute(args, spec),
    }
}

/// Entry point returning the process exit code.
pub fn main_with(args: Args) -> i32 {
    if args.list_presets {
        for (name, description) in PRESETS {
            println!("{name:14} {description}");
        }
        return 0;
    }
    match run(&args) {
        Ok(outcome) => {
            for r in &outcome.results {
                let last = r.series.last().expect("horizon >= 2");
                println!(
                    "{:>4} {:<8} self/agent {:.3} ± {:.3}  comm/agent {:.3} ± {:.3}",
                    r.policy().name(),
                    r.policy().sweep_value(),
                    last.self_regret,
                    last.se_self,
                    last.comm_regret,
                    last.se_comm
                );
            }
            println!(
                "wrote {} files to {}",
                outcome.manifest.outputs.len() + 1,
                args.out.display()
            );
            if args.assert_bounds && !outcome.bounds_pass {
                eprintln!("bound check failed; see bounds.json");
                return EXIT_BOUND_FAILURE;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
