use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StaticPolicy;
use crate::error::{Error, Result};
use crate::sim::{simulate, SimConfig};
use crate::workload::{JobSpec, SubclassId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub executors: u32,
    pub cost: f64,
    pub sla_attainment: f64,
}

/// Cheapest static executor count that meets every deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleChoice {
    pub executors: u32,
    pub cost: f64,
    /// No static count met every deadline; `executors` is the maximum.
    pub infeasible: bool,
    pub sweep: Vec<SweepPoint>,
}

/// Offline cost-optimal reference: for each subclass present in `workload`,
/// simulate every static count in `[min, max]` on that subclass's jobs and
/// keep the cheapest with full SLA attainment (ties go to fewer executors).
pub fn oracle_policy(
    workload: &[JobSpec],
    cfg: &SimConfig,
) -> Result<BTreeMap<SubclassId, OracleChoice>> {
    if workload.is_empty() {
        return Err(Error::InvalidInput("oracle sweep needs at least one job".into()));
    }
    let mut by_subclass: BTreeMap<SubclassId, Vec<JobSpec>> = BTreeMap::new();
    for job in workload {
        by_subclass
            .entry(job.subclass.id())
            .or_default()
            .push(job.clone());
    }
    let c = &cfg.cluster;
    let rate = c.rate_per_vcpu_hour;
    let mut out = BTreeMap::new();
    for (id, jobs) in by_subclass {
        let mut sweep = Vec::new();
        let mut best: Option<(u32, f64)> = None;
        for n in c.min_executors.max(1)..=c.max_executors {
            let mut policy = StaticPolicy::new(n);
            let record = simulate(&jobs, &mut policy, cfg, 0)?;
            let met = record.jobs.iter().filter(|j| j.deadline_met).count();
            let cost = record.vcpu_seconds / 3600.0 * rate;
            let attainment = met as f64 / record.jobs.len() as f64;
            if met == record.jobs.len() && best.is_none_or(|(_, b)| cost < b) {
                best = Some((n, cost));
            }
            sweep.push(SweepPoint {
                executors: n,
                cost,
                sla_attainment: attainment,
            });
        }
        let choice = match best {
            Some((executors, cost)) => OracleChoice {
                executors,
                cost,
                infeasible: false,
                sweep,
            },
            None => OracleChoice {
                executors: c.max_executors,
                cost: sweep.last().map_or(0.0, |p| p.cost),
                infeasible: true,
                sweep,
            },
        };
        out.insert(id, choice);
    }
    Ok(out)
}
