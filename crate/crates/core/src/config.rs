//! Declarative configuration: cluster, workload parameters, policy knobs and
//! the experiment plan all live in one TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::workload::{ClassId, SubclassId, Template};

const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub min_executors: u32,
    pub max_executors: u32,
    /// Executors ready at t=0 unless the policy asks for a static count.
    pub initial_executors: u32,
    pub slots_per_executor: u32,
    pub vcpus_per_executor: u32,
    /// Seconds between a scale-up request and the executor becoming usable.
    pub provisioning_latency: f64,
    pub decision_interval: f64,
    /// Shuffle read bandwidth per executor, bytes per second.
    pub shuffle_bandwidth: f64,
    /// Fixed delay before a broadcast-dependent stage may start.
    pub broadcast_latency: f64,
    pub rate_per_vcpu_hour: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_executors: 1,
            max_executors: 64,
            initial_executors: 1,
            slots_per_executor: 4,
            vcpus_per_executor: 4,
            provisioning_latency: 60.0,
            decision_interval: 30.0,
            shuffle_bandwidth: GIB,
            broadcast_latency: 5.0,
            rate_per_vcpu_hour: 0.048,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("cluster: {m}")));
        if self.min_executors > self.max_executors {
            return fail("min_executors exceeds max_executors");
        }
        if self.max_executors == 0 {
            return fail("max_executors must be positive");
        }
        if self.slots_per_executor == 0 || self.vcpus_per_executor == 0 {
            return fail("executors need at least one slot and one vcpu");
        }
        if !(self.decision_interval > 0.0) {
            return fail("decision_interval must be positive");
        }
        if !(self.provisioning_latency >= 0.0) || !(self.broadcast_latency >= 0.0) {
            return fail("latencies must be non-negative");
        }
        if !(self.shuffle_bandwidth > 0.0) {
            return fail("shuffle_bandwidth must be positive");
        }
        if !(self.rate_per_vcpu_hour >= 0.0) {
            return fail("rate_per_vcpu_hour must be non-negative");
        }
        Ok(())
    }

    pub fn clamp(&self, target: u32) -> u32 {
        target.clamp(self.min_executors, self.max_executors)
    }

    pub fn slot_cap(&self) -> u64 {
        u64::from(self.max_executors) * u64::from(self.slots_per_executor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Headroom multiplier of the reactive baseline.
    pub headroom: f64,
    /// Wall-clock seconds an external policy has to answer one decision.
    pub timeout: f64,
    pub token_bound: usize,
    pub recent_actions: usize,
    /// Currency per input token charged to external policies.
    pub token_rate_in: f64,
    pub token_rate_out: f64,
    /// Prefer token counts self-reported by the client over host counts.
    pub trust_client_tokens: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            headroom: 1.0,
            timeout: 10.0,
            token_bound: 4096,
            recent_actions: 5,
            token_rate_in: 1e-6,
            token_rate_out: 1e-6,
            trust_client_tokens: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArrivalPattern {
    /// Exponential inter-arrival gaps.
    Poisson { mean_gap: f64 },
    /// Fixed period with uniform relative jitter in `[-jitter, +jitter]`.
    Periodic { period: f64, jitter: f64 },
    /// Two-phase mixture: short in-burst gaps with probability `burst_prob`,
    /// long quiet gaps otherwise.
    Bursty {
        burst_prob: f64,
        burst_gap: f64,
        quiet_gap: f64,
    },
}

/// Per-class overrides; unset fields take the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassOverride {
    pub shuffle_ratio: Option<(f64, f64)>,
    pub zipf_low: Option<f64>,
    pub zipf_high: Option<f64>,
    pub stage_count: Option<(u32, u32)>,
    pub iterations: Option<(u32, u32)>,
    pub arrival: Option<ArrivalPattern>,
}

/// Fully resolved parameters of one base class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadClass {
    pub id: ClassId,
    pub shuffle_to_input_ratio_range: (f64, f64),
    /// Exponent at the class's default skew level.
    pub zipf_exponent: f64,
    pub zipf_low: f64,
    pub zipf_high: f64,
    /// Inclusive stage-count bounds. For the iterative template this is
    /// `3 * iterations`.
    pub stage_count_range: (u32, u32),
    pub iterations: Option<(u32, u32)>,
    pub structural_template: Template,
    pub arrival: ArrivalPattern,
}

impl WorkloadClass {
    pub fn exponent_for(&self, skew: crate::workload::SkewLevel) -> f64 {
        match skew {
            crate::workload::SkewLevel::Low => self.zipf_low,
            crate::workload::SkewLevel::High => self.zipf_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub zipf_low: f64,
    pub zipf_high: f64,
    /// Straggler coefficient: task k runs `base * (1 + c * n * share_k)`.
    pub straggler_coefficient: f64,
    /// Bytes per second one task slot processes.
    pub slot_throughput: f64,
    pub min_task_duration: f64,
    pub small_input_gib: (f64, f64),
    pub large_input_gib: (f64, f64),
    pub small_partitions: (u32, u32),
    pub large_partitions: (u32, u32),
    /// Deadline = multiplier * calibrated median unconstrained runtime.
    pub sla_multiplier: f64,
    pub calibration_jobs: usize,
    pub calibration_executors: u32,
    pub calibration_seed: u64,
    pub classes: BTreeMap<ClassId, ClassOverride>,
    /// Cached medians of unconstrained runtime; filled by calibration.
    pub sla_medians: BTreeMap<SubclassId, f64>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            zipf_low: 0.3,
            zipf_high: 1.4,
            straggler_coefficient: 1.0,
            slot_throughput: 128.0 * 1024.0 * 1024.0,
            min_task_duration: 1.0,
            small_input_gib: (1.0, 64.0),
            large_input_gib: (64.0, 512.0),
            small_partitions: (16, 64),
            large_partitions: (64, 256),
            sla_multiplier: 2.0,
            calibration_jobs: 31,
            calibration_executors: 1024,
            calibration_seed: 0x5eed_ca1b,
            classes: BTreeMap::new(),
            sla_medians: BTreeMap::new(),
        }
    }
}

impl WorkloadConfig {
    pub fn class(&self, id: ClassId) -> WorkloadClass {
        let o = self.classes.get(&id).cloned().unwrap_or_default();
        let (stage_count, iterations) = match id.template() {
            Template::LinearWide => ((4, 8), None),
            Template::JoinTree => ((5, 9), None),
            Template::IterativeLoop => {
                let it = o.iterations.unwrap_or((4, 8));
                ((3 * it.0, 3 * it.1), Some(it))
            }
            Template::WindowAgg => ((3, 5), None),
            Template::BroadcastJoin => ((3, 4), None),
            Template::BurstyBatch => ((3, 6), None),
        };
        let arrival = match id {
            ClassId::TimeWindowedAgg => ArrivalPattern::Periodic {
                period: 300.0,
                jitter: 0.05,
            },
            ClassId::BurstySlaReporting => ArrivalPattern::Bursty {
                burst_prob: 0.8,
                burst_gap: 5.0,
                quiet_gap: 900.0,
            },
            _ => ArrivalPattern::Poisson { mean_gap: 180.0 },
        };
        let zipf_low = o.zipf_low.unwrap_or(self.zipf_low);
        let zipf_high = o.zipf_high.unwrap_or(self.zipf_high);
        let zipf_exponent = match id.default_skew() {
            crate::workload::SkewLevel::Low => zipf_low,
            crate::workload::SkewLevel::High => zipf_high,
        };
        WorkloadClass {
            id,
            shuffle_to_input_ratio_range: o
                .shuffle_ratio
                .unwrap_or_else(|| id.shuffle_band().default_range()),
            zipf_exponent,
            zipf_low,
            zipf_high,
            stage_count_range: if iterations.is_some() {
                stage_count
            } else {
                o.stage_count.unwrap_or(stage_count)
            },
            iterations,
            structural_template: id.template(),
            arrival: o.arrival.unwrap_or(arrival),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("workload: {m}")));
        if !(self.zipf_low > 0.0 && self.zipf_high > 0.0) {
            return fail("zipf exponents must be positive".into());
        }
        if !(self.slot_throughput > 0.0) || !(self.min_task_duration > 0.0) {
            return fail("slot_throughput and min_task_duration must be positive".into());
        }
        if !(self.sla_multiplier > 0.0) {
            return fail("sla_multiplier must be positive".into());
        }
        if self.calibration_jobs == 0 || self.calibration_executors == 0 {
            return fail("calibration needs at least one job and one executor".into());
        }
        for (lo, hi, name) in [
            (self.small_input_gib.0, self.small_input_gib.1, "small_input_gib"),
            (self.large_input_gib.0, self.large_input_gib.1, "large_input_gib"),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return fail(format!("{name} must be a positive interval"));
            }
        }
        for (lo, hi, name) in [
            (self.small_partitions.0, self.small_partitions.1, "small_partitions"),
            (self.large_partitions.0, self.large_partitions.1, "large_partitions"),
        ] {
            if lo == 0 || lo > hi {
                return fail(format!("{name} must be a positive interval"));
            }
        }
        for id in ClassId::ALL {
            let c = self.class(id);
            let (lo, hi) = c.shuffle_to_input_ratio_range;
            if !(lo >= 0.0 && lo <= hi) {
                return fail(format!("{id}: bad shuffle ratio range"));
            }
            if !(c.zipf_low > 0.0 && c.zipf_high > 0.0) {
                return fail(format!("{id}: zipf exponents must be positive"));
            }
            let (slo, shi) = c.stage_count_range;
            if slo == 0 || slo > shi {
                return fail(format!("{id}: bad stage count range"));
            }
            if id.template() == Template::JoinTree && slo < 5 {
                return fail(format!("{id}: join trees need at least 5 stages"));
            }
            if id.template() == Template::BroadcastJoin && (slo < 3 || shi > 4) {
                return fail(format!("{id}: broadcast joins have 3 or 4 stages"));
            }
        }
        for (id, m) in &self.sla_medians {
            if !(*m > 0.0) {
                return fail(format!("sla median for {id} must be positive"));
            }
        }
        Ok(())
    }
}

/// How an experiment plan names a policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyDescriptor {
    /// `reactive`, `reactive:<headroom>`, `fingerprint`, `oracle-static`,
    /// `hold` or `static:<count>`.
    Builtin(String),
    External { name: String, command: Vec<String> },
}

impl PolicyDescriptor {
    pub fn name(&self) -> &str {
        match self {
            PolicyDescriptor::Builtin(n) => n,
            PolicyDescriptor::External { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioDenominator {
    Oracle,
    Policy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub policies: Vec<PolicyDescriptor>,
    pub subclasses: Vec<SubclassId>,
    pub seeds: Vec<u64>,
    pub jobs_per_cell: usize,
    pub output_dir: PathBuf,
    pub bootstrap_resamples: usize,
    pub alpha: f64,
    pub responsiveness_threshold: f64,
    pub ratio_denominator: RatioDenominator,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            policies: vec![
                PolicyDescriptor::Builtin("reactive".into()),
                PolicyDescriptor::Builtin("fingerprint".into()),
                PolicyDescriptor::Builtin("oracle-static".into()),
            ],
            subclasses: crate::workload::registry().iter().map(|s| s.id()).collect(),
            seeds: vec![1, 2, 3, 4, 5],
            jobs_per_cell: 4,
            output_dir: PathBuf::from("runs"),
            bootstrap_resamples: 10_000,
            alpha: 0.05,
            responsiveness_threshold: 0.5,
            ratio_denominator: RatioDenominator::Oracle,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("plan: {m}")));
        if self.policies.is_empty() {
            return fail("at least one policy is required".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.subclasses.is_empty() {
            return fail("at least one subclass is required".into());
        }
        if self.jobs_per_cell == 0 {
            return fail("jobs_per_cell must be positive".into());
        }
        if self.bootstrap_resamples < 100 {
            return fail("bootstrap_resamples must be at least 100".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.policies {
            if !names.insert(p.name().to_string()) {
                return fail(format!("duplicate policy name {}", p.name()));
            }
            if let PolicyDescriptor::External { command, .. } = p {
                if command.first().is_none_or(|c| c.trim().is_empty()) {
                    return fail(format!("external policy {} has no command", p.name()));
                }
            }
        }
        for s in &self.subclasses {
            s.registered()?;
        }
        if let RatioDenominator::Policy(name) = &self.ratio_denominator {
            if !names.contains(name.as_str()) {
                return fail(format!("ratio denominator {name} is not in the plan"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cluster: ClusterConfig,
    pub policy: PolicyConfig,
    pub workload: WorkloadConfig,
    pub plan: PlanConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.workload.validate()?;
        self.plan.validate()
    }

    /// Hash of everything that affects calibration results. Cached medians
    /// are excluded so that a cache written back into the config keeps the
    /// same key.
    pub fn calibration_hash(&self) -> String {
        let mut workload = self.workload.clone();
        workload.sla_medians.clear();
        let canonical = serde_json::to_value((&self.cluster, &workload))
            .expect("config serializes")
            .to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
