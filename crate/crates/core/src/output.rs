//! CSV and JSON result files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::AgentSnapshot;
use crate::config::{ExperimentSpec, CONFIG_FORMAT};
use crate::engine::{ExperimentResult, TrialTrace};
use crate::metrics::BoundCheck;

pub const REGRET_FILE: &str = "regret.csv";
pub const FIK_FILE: &str = "fik.csv";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const REGRET_HEADER: [&str; 7] = [
    "t",
    "policy",
    "sweep_value",
    "self_regret_per_agent",
    "comm_regret_per_agent",
    "se_self",
    "se_comm",
];
pub const FIK_HEADER: [&str; 7] = ["policy", "sweep_value", "agent", "option", "f_value", "num", "den"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// SHA-256 over `"blob <len>\0" + content`, the way git frames blobs.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn regret_csv(results: &[ExperimentResult]) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REGRET_HEADER)?;
    for r in results {
        let policy = r.policy().name();
        let value = r.policy().sweep_value().to_string();
        for p in &r.series {
            w.write_record([
                p.t.to_string(),
                policy.to_string(),
                value.clone(),
                p.self_regret.to_string(),
                p.comm_regret.to_string(),
                p.se_self.to_string(),
                p.se_comm.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| OutputError::Csv(e.into_error().into()))
}

/// `f_ik` pooled over trials (ratio of summed counters); `NA` without data.
pub fn fik_csv(results: &[ExperimentResult]) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIK_HEADER)?;
    for r in results {
        let policy = r.policy().name();
        let value = r.policy().sweep_value().to_string();
        let l = &r.pooled;
        for agent in 0..l.n_agents() {
            for option in 0..l.n_options() {
                let (num, den) = l.fik_counts(agent, option);
                let f = l
                    .f_ik(agent, option)
                    .map_or_else(|| "NA".to_string(), |f| f.to_string());
                w.write_record([
                    policy.to_string(),
                    value.clone(),
                    agent.to_string(),
                    option.to_string(),
                    f,
                    num.to_string(),
                    den.to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| OutputError::Csv(e.into_error().into()))
}

#[derive(Debug, Serialize)]
struct LabeledCheck<'a> {
    policy: &'a str,
    sweep_value: f64,
    #[serde(flatten)]
    check: &'a BoundCheck,
}

#[derive(Debug, Serialize)]
struct BoundsFile<'a> {
    horizon: u64,
    all_pass: bool,
    checks: Vec<LabeledCheck<'a>>,
}

pub fn all_bounds_pass(results: &[ExperimentResult]) -> bool {
    results.iter().flat_map(|r| &r.bounds).all(|b| b.pass)
}

pub fn bounds_json(results: &[ExperimentResult]) -> Result<Vec<u8>, OutputError> {
    let file = BoundsFile {
        horizon: results.first().map_or(0, |r| r.config.horizon),
        all_pass: all_bounds_pass(results),
        checks: results
            .iter()
            .flat_map(|r| {
                r.bounds.iter().map(move |check| LabeledCheck {
                    policy: r.policy().name(),
                    sweep_value: r.policy().sweep_value(),
                    check,
                })
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub policy: String,
    pub sweep_value: f64,
    pub trial_seeds: Vec<u64>,
}

/// Everything needed to rerun an experiment, plus hashes of what it wrote.
/// Passing the manifest back as `--config` reproduces the outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub experiment: ExperimentSpec,
    pub config_hash: String,
    pub runs: Vec<RunEntry>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
struct TraceDump<'a> {
    policy: &'a str,
    sweep_value: f64,
    trial: usize,
    trace: &'a TrialTrace,
    final_agents: Vec<AgentSnapshot>,
}

/// File name for a trace dump of one run.
pub fn trace_file_name(policy: &str, sweep_value: f64) -> String {
    format!("trace_{policy}_{sweep_value}.json")
}

pub fn trace_json(
    policy: &str,
    sweep_value: f64,
    trial: usize,
    trace: &TrialTrace,
    final_agents: Vec<AgentSnapshot>,
) -> Result<Vec<u8>, OutputError> {
    let dump = TraceDump {
        policy,
        sweep_value,
        trial,
        trace,
        final_agents,
    };
    Ok(serde_json::to_vec(&dump)?)
}

/// Writes the regret, f_ik, bound-check and manifest files (plus any extra
/// named files such as trace dumps) into `dir`.
pub fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    results: &[ExperimentResult],
    extra: Vec<(String, Vec<u8>)>,
) -> Result<Manifest, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = vec![
        (REGRET_FILE.to_string(), regret_csv(results)?),
        (FIK_FILE.to_string(), fik_csv(results)?),
        (BOUNDS_FILE.to_string(), bounds_json(results)?),
    ];
    files.extend(extra);

    let mut outputs = BTreeMap::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        outputs.insert(name.clone(), content_hash(bytes));
    }

    let manifest = Manifest {
        format: CONFIG_FORMAT,
        experiment: spec.clone(),
        config_hash: content_hash(&serde_json::to_vec(spec)?),
        runs: results
            .iter()
            .map(|r| RunEntry {
                policy: r.policy().name().to_string(),
                sweep_value: r.policy().sweep_value(),
                trial_seeds: r.trial_seeds.clone(),
            })
            .collect(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(manifest)
}
