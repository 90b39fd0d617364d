//! Experiment orchestration: calibration, the policy × subclass × seed
//! matrix, and report files.

mod calibrate;
mod protocol_check;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, PolicyDescriptor};
use crate::error::{Error, Result};
use crate::policy::{
    oracle_policy, ExternalPolicy, ExternalPolicyOptions, FingerprintPolicy, HoldPolicy, Policy,
    ReactivePolicy, StaticPolicy,
};
use crate::sim::{simulate, RunRecord, SimConfig};
use crate::store::DecisionStore;
use crate::workload::{Generator, JobSpec, SubclassId};

pub use calibrate::{
    cache_path, calibrate, calibrate_cached, calibration_key, CacheStatus, Calibration,
};
pub use protocol_check::{protocol_check, CheckCase, ProtocolCheckReport};
pub use report::{
    build_report, summary_table, CellFailure, CellResult, CellRun, Comparison, ExperimentReport,
    PolicyAggregate, RatioInterval, REPORT_SCHEMA,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the plan's output directory.
    pub output_dir: Option<PathBuf>,
    /// Directory name under the output directory; a timestamp by default.
    pub stamp: Option<String>,
    /// Backs the `lookup_history` tool of external policies.
    pub store: Option<Arc<DecisionStore>>,
}

#[derive(Debug)]
pub struct PlanOutcome {
    pub report: ExperimentReport,
    pub dir: PathBuf,
    pub calibration: CacheStatus,
}

/// Static-optimal reference for one cell workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    pub subclass: SubclassId,
    pub seed: u64,
    pub executors: u32,
    pub dollars: f64,
    pub infeasible: bool,
}

/// Builds the policy a descriptor names. Built-in names: `reactive`,
/// `reactive:<headroom>`, `fingerprint`, `oracle-static`, `hold`,
/// `static:<count>`.
pub fn instantiate_policy(
    desc: &PolicyDescriptor,
    subclass: SubclassId,
    cfg: &Config,
    calibration: &Calibration,
    store: Option<&Arc<DecisionStore>>,
) -> Result<Box<dyn Policy>> {
    let headroom = cfg.policy.headroom;
    match desc {
        PolicyDescriptor::Builtin(name) => {
            let (kind, arg) = match name.split_once(':') {
                Some((k, a)) => (k, Some(a)),
                None => (name.as_str(), None),
            };
            let parse = |a: &str| -> Result<f64> {
                a.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad argument in policy {name:?}")))
            };
            Ok(match (kind, arg) {
                ("reactive", None) => Box::new(ReactivePolicy::new(headroom).named(name.clone())),
                ("reactive", Some(a)) => Box::new(ReactivePolicy::new(parse(a)?).named(name.clone())),
                ("fingerprint", None) => Box::new(FingerprintPolicy::new(
                    calibration.fingerprint.clone(),
                    headroom,
                )?),
                ("oracle-static", None) => {
                    let choice = calibration.oracle.get(&subclass).ok_or_else(|| {
                        Error::Config(format!("no calibrated oracle count for {subclass}"))
                    })?;
                    Box::new(StaticPolicy::new(choice.executors).named(name.clone()))
                }
                ("hold", None) => Box::new(HoldPolicy),
                ("static", Some(a)) => {
                    let n = parse(a)?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(Error::Config(format!("bad executor count in {name:?}")));
                    }
                    Box::new(StaticPolicy::new(n as u32).named(name.clone()))
                }
                _ => return Err(Error::Config(format!("unknown built-in policy {name:?}"))),
            })
        }
        PolicyDescriptor::External { name, command } => {
            let mut p = ExternalPolicy::spawn(name, command, ExternalPolicyOptions::from_config(&cfg.policy))?;
            if let Some(s) = store {
                p = p.with_store(Arc::clone(s));
            }
            Ok(Box::new(p))
        }
    }
}

/// File-system friendly version of a policy name.
fn file_token(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn run_file_name(policy: &str, subclass: SubclassId, seed: u64) -> String {
    format!("{}__{subclass}__{seed}.ndjson", file_token(policy))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_run_dir(root: &Path, stamp: Option<&str>) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let base = stamp.map_or_else(
        || format!("run-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ")),
        str::to_string,
    );
    let mut dir = root.join(&base);
    let mut n = 2;
    while dir.exists() {
        dir = root.join(format!("{base}-{n}"));
        n += 1;
    }
    fs::create_dir_all(dir.join("runs")).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Runs every plan cell and writes the report under a fresh run directory.
pub fn run_plan(cfg: &Config, opts: &RunOptions) -> Result<PlanOutcome> {
    cfg.validate()?;
    let plan = &cfg.plan;
    let root = opts.output_dir.clone().unwrap_or_else(|| plan.output_dir.clone());
    let dir = create_run_dir(&root, opts.stamp.as_deref())?;
    info!("writing results to {}", dir.display());

    let (calibration, cache) = calibrate_cached(
        cfg,
        &plan.subclasses,
        cfg.workload.calibration_seed,
        plan.jobs_per_cell,
        &root,
    )?;
    let mut cfg = cfg.clone();
    cfg.workload
        .sla_medians
        .extend(calibration.medians.iter().map(|(k, v)| (*k, *v)));
    let generator = Generator::new(&cfg.workload, &cfg.cluster)?;
    let sim_cfg = SimConfig::from_config(&cfg);

    let keys: Vec<(SubclassId, u64)> = plan
        .subclasses
        .iter()
        .flat_map(|s| plan.seeds.iter().map(move |seed| (*s, *seed)))
        .collect();
    let workloads: BTreeMap<(SubclassId, u64), Vec<JobSpec>> = keys
        .par_iter()
        .map(|&(sub, seed)| {
            let jobs = generator.generate_workload(&sub.registered()?, plan.jobs_per_cell, seed)?;
            Ok(((sub, seed), jobs))
        })
        .collect::<Result<_>>()?;

    let oracle: Vec<OracleCell> = keys
        .par_iter()
        .map(|&(sub, seed)| {
            let choice = oracle_policy(&workloads[&(sub, seed)], &sim_cfg)?
                .remove(&sub)
                .ok_or_else(|| Error::Validation(format!("oracle sweep missed {sub}")))?;
            Ok(OracleCell {
                subclass: sub,
                seed,
                executors: choice.executors,
                dollars: choice.cost,
                infeasible: choice.infeasible,
            })
        })
        .collect::<Result<_>>()?;
    let plan_cells: Vec<(&PolicyDescriptor, SubclassId, u64)> = plan
        .policies
        .iter()
        .flat_map(|p| keys.iter().map(move |&(s, seed)| (p, s, seed)))
        .collect();
    let cells: Vec<CellRun> = plan_cells
        .par_iter()
        .map(|&(desc, sub, seed)| {
            let result = run_cell(desc, sub, seed, &cfg, &calibration, &workloads[&(sub, seed)], &sim_cfg, opts.store.as_ref());
            let result = match result {
                Ok(record) => {
                    let path = dir.join("runs").join(run_file_name(desc.name(), sub, seed));
                    write(&path, &record.to_ndjson()).map(|_| record).map_err(|e| e.to_string())
                }
                Err(Error::PolicyFault { at, reason, partial }) => {
                    let path = dir
                        .join("runs")
                        .join(run_file_name(desc.name(), sub, seed).replace(".ndjson", ".partial.ndjson"));
                    if let Err(e) = write(&path, &partial.to_ndjson()) {
                        warn!("cannot write partial record: {e}");
                    }
                    Err(format!("policy fault at t={at}: {reason}"))
                }
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = &result {
                warn!("cell {} {sub} {seed} failed: {e}", desc.name());
            }
            CellRun {
                policy: desc.name().to_string(),
                subclass: sub,
                seed,
                result,
            }
        })
        .collect();

    let failures: Vec<CellFailure> = cells
        .iter()
        .filter_map(|c| {
            c.result.as_ref().err().map(|e| CellFailure {
                policy: c.policy.clone(),
                subclass: c.subclass,
                seed: c.seed,
                error: e.clone(),
            })
        })
        .collect();
    write(&dir.join("config.toml"), &cfg.to_toml_string())?;
    write(&dir.join("calibration.json"), &serde_json::to_string_pretty(&calibration)?)?;
    write(&dir.join("oracle.json"), &serde_json::to_string_pretty(&oracle)?)?;
    write(&dir.join("failures.json"), &serde_json::to_string_pretty(&failures)?)?;

    let report = build_report(
        plan,
        cfg.cluster.rate_per_vcpu_hour,
        &calibration.key,
        &cells,
        &oracle,
        chrono::Utc::now().to_rfc3339(),
    )?;
    write_report(&dir, &report)?;
    Ok(PlanOutcome {
        report,
        dir,
        calibration: cache,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    desc: &PolicyDescriptor,
    sub: SubclassId,
    seed: u64,
    cfg: &Config,
    calibration: &Calibration,
    jobs: &[JobSpec],
    sim_cfg: &SimConfig,
    store: Option<&Arc<DecisionStore>>,
) -> Result<RunRecord> {
    let mut policy = instantiate_policy(desc, sub, cfg, calibration, store)?;
    let mut record = simulate(jobs, &mut policy, sim_cfg, seed)?;
    record.header.run_id = format!("{}/{sub}/{seed}", desc.name());
    Ok(record)
}

/// Writes report.json, metrics.ndjson and summary.txt.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    let mut rows = String::new();
    for c in &report.cells {
        rows.push_str(&serde_json::to_string(&c.metrics)?);
        rows.push('\n');
    }
    write(&dir.join("metrics.ndjson"), &rows)?;
    write(&dir.join("summary.txt"), &summary_table(report))
}

/// Rebuilds the report of a finished run directory from its stored
/// run records.
pub fn report_from_dir(dir: &Path) -> Result<ExperimentReport> {
    let cfg = Config::load(&dir.join("config.toml"))?;
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let calibration: Calibration = serde_json::from_str(&read("calibration.json")?)?;
    let oracle: Vec<OracleCell> = serde_json::from_str(&read("oracle.json")?)?;
    let failures: Vec<CellFailure> = serde_json::from_str(&read("failures.json")?)?;
    let plan = &cfg.plan;
    let mut cells = Vec::new();
    for desc in &plan.policies {
        for sub in &plan.subclasses {
            for &seed in &plan.seeds {
                let path = dir.join("runs").join(run_file_name(desc.name(), *sub, seed));
                let result = if path.exists() {
                    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    Ok(RunRecord::read_ndjson(std::io::BufReader::new(f))?)
                } else {
                    Err(failures
                        .iter()
                        .find(|f| f.policy == desc.name() && f.subclass == *sub && f.seed == seed)
                        .map_or_else(|| "run record missing".to_string(), |f| f.error.clone()))
                };
                cells.push(CellRun {
                    policy: desc.name().to_string(),
                    subclass: *sub,
                    seed,
                    result,
                });
            }
        }
    }
    build_report(
        plan,
        cfg.cluster.rate_per_vcpu_hour,
        &calibration.key,
        &cells,
        &oracle,
        chrono::Utc::now().to_rfc3339(),
    )
}
