use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::policy::{oracle_policy, OracleChoice};
use crate::sim::SimConfig;
use crate::workload::{Generator, SubclassId};

/// SLA medians, static-optimal counts and the fingerprint lookup table
/// derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub key: String,
    pub seed: u64,
    pub jobs: usize,
    pub medians: BTreeMap<SubclassId, f64>,
    pub oracle: BTreeMap<SubclassId, OracleChoice>,
    pub fingerprint: BTreeMap<SubclassId, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

/// Cache key: the calibration hash of the configuration plus the subclass
/// list, seed and workload size.
pub fn calibration_key(cfg: &Config, subclasses: &[SubclassId], seed: u64, jobs: usize) -> String {
    let mut subs: Vec<String> = subclasses.iter().map(ToString::to_string).collect();
    subs.sort();
    subs.dedup();
    let text = format!("{}|{}|{seed}|{jobs}", cfg.calibration_hash(), subs.join(","));
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("calibration-{}.json", &key[..16]))
}

/// Computes medians and oracle counts for `subclasses`. The oracle sweep
/// runs on a workload of `jobs` jobs generated with `seed`.
pub fn calibrate(
    cfg: &Config,
    subclasses: &[SubclassId],
    seed: u64,
    jobs: usize,
) -> Result<Calibration> {
    let generator = Generator::new(&cfg.workload, &cfg.cluster)?;
    let sim_cfg = SimConfig::from_config(cfg);
    let mut medians = BTreeMap::new();
    let mut oracle = BTreeMap::new();
    for id in subclasses {
        let sub = id.registered()?;
        medians.insert(*id, generator.sla_median(*id)?);
        let workload = generator.generate_workload(&sub, jobs, seed)?;
        let choice = oracle_policy(&workload, &sim_cfg)?
            .remove(id)
            .ok_or_else(|| Error::Validation(format!("oracle produced no entry for {id}")))?;
        if choice.infeasible {
            warn!("{id}: no static count meets every deadline; using {}", choice.executors);
        }
        oracle.insert(*id, choice);
    }
    let fingerprint = oracle.iter().map(|(k, v)| (*k, v.executors)).collect();
    Ok(Calibration {
        key: calibration_key(cfg, subclasses, seed, jobs),
        seed,
        jobs,
        medians,
        oracle,
        fingerprint,
    })
}

/// Like [`calibrate`], reusing `<dir>/calibration-<key>.json` when its key
/// matches.
pub fn calibrate_cached(
    cfg: &Config,
    subclasses: &[SubclassId],
    seed: u64,
    jobs: usize,
    dir: &Path,
) -> Result<(Calibration, CacheStatus)> {
    let key = calibration_key(cfg, subclasses, seed, jobs);
    let path = cache_path(dir, &key);
    if let Ok(text) = std::fs::read_to_string(&path) {
        match serde_json::from_str::<Calibration>(&text) {
            Ok(c) if c.key == key => {
                info!("calibration cache hit: {}", path.display());
                return Ok((c, CacheStatus::Hit));
            }
            Ok(_) => info!("stale calibration cache {}", path.display()),
            Err(e) => warn!("unreadable calibration cache {}: {e}", path.display()),
        }
    }
    let c = calibrate(cfg, subclasses, seed, jobs)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(&c)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((c, CacheStatus::Miss))
}
