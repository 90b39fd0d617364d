use std::collections::BTreeMap;

use super::{Decision, Observation, Policy, PolicyFailure, ScalingAction};
use crate::error::{Error, Result};
use crate::workload::SubclassId;

/// Executors needed to run the pending demand, scaled by `headroom`, clamped
/// to the configured bounds.
pub fn reactive_target(obs: &Observation, headroom: f64) -> ScalingAction {
    let c = &obs.cluster;
    let needed = obs.demand_slots.div_ceil(u64::from(c.slots_per_executor.max(1)));
    let scaled = (needed as f64 * headroom).ceil();
    let target = if scaled >= f64::from(c.max_executors) {
        c.max_executors
    } else {
        (scaled.max(0.0) as u32).max(c.min_executors)
    };
    ScalingAction::to(target)
}

/// The subclass with the most runnable tasks among active jobs; ties go to
/// the lower registry ordinal.
pub fn dominant_subclass(obs: &Observation) -> Option<SubclassId> {
    let mut runnable: BTreeMap<(usize, SubclassId), u64> = BTreeMap::new();
    for j in &obs.jobs {
        let ord = j.subclass.ordinal().unwrap_or(usize::MAX);
        *runnable.entry((ord, j.subclass)).or_default() += j.runnable_tasks;
    }
    // BTreeMap iterates in ordinal order; keep the first maximum.
    let mut best: Option<(SubclassId, u64)> = None;
    for ((_, id), n) in runnable {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((id, n));
        }
    }
    best.map(|(id, _)| id)
}

/// Table lookup on the dominant active subclass, reactive otherwise.
pub fn fingerprint_target(
    obs: &Observation,
    table: &BTreeMap<SubclassId, u32>,
    headroom: f64,
) -> Result<ScalingAction> {
    if table.is_empty() {
        return Err(Error::Config("fingerprint table is empty".into()));
    }
    Ok(dominant_subclass(obs)
        .and_then(|id| table.get(&id))
        .map(|&n| ScalingAction::to(n))
        .unwrap_or_else(|| reactive_target(obs, headroom)))
}

/// Scales to pending demand, like dynamic allocation driven by pending and
/// running task counts.
#[derive(Debug, Clone)]
pub struct ReactivePolicy {
    pub headroom: f64,
    name: String,
}

impl ReactivePolicy {
    pub fn new(headroom: f64) -> Self {
        Self {
            headroom,
            name: "reactive".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Policy for ReactivePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, PolicyFailure> {
        Ok(reactive_target(obs, self.headroom).into())
    }
}

/// Predicts an executor count from the workload fingerprint (its subclass)
/// using a table learned offline.
#[derive(Debug, Clone)]
pub struct FingerprintPolicy {
    table: BTreeMap<SubclassId, u32>,
    headroom: f64,
}

impl FingerprintPolicy {
    pub fn new(table: BTreeMap<SubclassId, u32>, headroom: f64) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Config("fingerprint table is empty".into()));
        }
        Ok(Self { table, headroom })
    }
}

impl Policy for FingerprintPolicy {
    fn name(&self) -> &str {
        "fingerprint"
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, PolicyFailure> {
        fingerprint_target(obs, &self.table, self.headroom)
            .map(Decision::from)
            .map_err(|e| PolicyFailure::Fatal {
                reason: e.to_string(),
            })
    }
}

/// Fixed executor count from t=0.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    count: u32,
    name: String,
}

impl StaticPolicy {
    pub fn new(count: u32) -> Self {
        Self {
            count,
            name: format!("static:{count}"),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Policy for StaticPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn initial_executors(&self) -> Option<u32> {
        Some(self.count)
    }

    fn decide(&mut self, _obs: &Observation) -> Result<Decision, PolicyFailure> {
        Ok(ScalingAction::to(self.count).into())
    }
}

/// Always asks for the currently running executor count.
#[derive(Debug, Clone, Default)]
pub struct HoldPolicy;

impl Policy for HoldPolicy {
    fn name(&self) -> &str {
        "hold"
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, PolicyFailure> {
        Ok(ScalingAction::to(obs.cluster.running_executors).into())
    }
}
