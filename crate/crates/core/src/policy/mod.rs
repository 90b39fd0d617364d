//! Uniform policy interface: the simulator hands every policy an
//! [`Observation`] at each decision tick and applies the returned
//! [`ScalingAction`].

mod baseline;
mod external;
mod ledger;
mod observation;
mod oracle;
pub mod protocol;

use serde::{Deserialize, Serialize};

use crate::workload::SubclassId;

pub use baseline::{
    dominant_subclass, fingerprint_target, reactive_target, FingerprintPolicy, HoldPolicy,
    ReactivePolicy, StaticPolicy,
};
pub use external::{ExternalPolicy, ExternalPolicyOptions};
pub use ledger::{InferenceCostLedger, LedgerEntry, TokenRates};
pub use observation::{count_tokens, serialize_observation, SerializedObservation};
pub use oracle::{oracle_policy, OracleChoice, SweepPoint};

pub const OBSERVATION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingAction {
    pub target_executors: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

impl ScalingAction {
    pub fn to(target_executors: u32) -> Self {
        Self {
            target_executors,
            justification: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub running_executors: u32,
    pub provisioning_executors: u32,
    pub draining_executors: u32,
    /// Target applied at the previous decision.
    pub current_target: u32,
    pub min_executors: u32,
    pub max_executors: u32,
    pub slots_per_executor: u32,
    pub vcpus_per_executor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobDigest {
    pub job_id: String,
    pub subclass: SubclassId,
    pub submit_time: f64,
    pub stages_done: u32,
    pub stages_total: u32,
    /// Tasks in runnable stages that have not started.
    pub runnable_tasks: u64,
    pub shuffled_bytes: u64,
    /// Seconds until the job's deadline; negative once it is missed.
    pub time_to_deadline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub rate_per_vcpu_hour: f64,
    pub vcpu_hours_so_far: f64,
    pub dollars_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub schema_version: u32,
    pub sim_time: f64,
    pub cluster: ClusterView,
    pub demand_slots: u64,
    pub jobs: Vec<JobDigest>,
    pub cost_model: CostModel,
    pub recent_actions: Vec<ScalingAction>,
    /// Set by the serializer when job digests were dropped to fit the bound.
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub omitted_jobs: u64,
}

impl Observation {
    /// An idle cluster with no jobs; mostly useful for tests and probes.
    pub fn empty(cluster: &crate::config::ClusterConfig) -> Self {
        Self {
            schema_version: OBSERVATION_SCHEMA_VERSION,
            sim_time: 0.0,
            cluster: ClusterView {
                running_executors: 0,
                provisioning_executors: 0,
                draining_executors: 0,
                current_target: 0,
                min_executors: cluster.min_executors,
                max_executors: cluster.max_executors,
                slots_per_executor: cluster.slots_per_executor,
                vcpus_per_executor: cluster.vcpus_per_executor,
            },
            demand_slots: 0,
            jobs: Vec::new(),
            cost_model: CostModel {
                rate_per_vcpu_hour: cluster.rate_per_vcpu_hour,
                vcpu_hours_so_far: 0.0,
                dollars_so_far: 0.0,
            },
            recent_actions: Vec::new(),
            truncated: false,
            omitted_jobs: 0,
        }
    }
}

/// What a policy returned for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: ScalingAction,
    pub ledger: Option<LedgerEntry>,
    /// Hybrid clients report whether their slow path ran.
    pub gate_open: Option<bool>,
}

impl From<ScalingAction> for Decision {
    fn from(action: ScalingAction) -> Self {
        Self {
            action,
            ledger: None,
            gate_open: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyFailure {
    /// The decision is lost (timeout, malformed frame); the simulator holds
    /// the previous target and keeps going.
    Recoverable {
        reason: String,
        ledger: Option<LedgerEntry>,
    },
    /// The policy can no longer be consulted.
    Fatal { reason: String },
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Executors to have ready at t=0; `None` uses the cluster default.
    fn initial_executors(&self) -> Option<u32> {
        None
    }

    /// Whether decisions are charged to an inference-cost ledger.
    fn tracks_inference_cost(&self) -> bool {
        false
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, PolicyFailure>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn initial_executors(&self) -> Option<u32> {
        (**self).initial_executors()
    }
    fn tracks_inference_cost(&self) -> bool {
        (**self).tracks_inference_cost()
    }
    fn decide(&mut self, obs: &Observation) -> Result<Decision, PolicyFailure> {
        (**self).decide(obs)
    }
}
