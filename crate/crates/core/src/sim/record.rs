use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{InferenceCostLedger, LedgerEntry};
use crate::workload::SubclassId;

pub const RUN_SCHEMA: &str = "scalebench.run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job_id: String,
    pub subclass: SubclassId,
    pub submit_time: f64,
    /// Absolute deadline.
    pub deadline_at: f64,
    pub finish_time: f64,
    pub deadline_met: bool,
}

/// Condensed per-decision context kept for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFeatures {
    pub dominant_subclass: Option<SubclassId>,
    pub active_jobs: u32,
    pub shuffled_bytes: u64,
}

/// One decision tick: the observed load, the requested and applied target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub demand_slots: u64,
    /// Billable executors (active plus draining) when the tick fired.
    pub running_executors: u32,
    /// `None` when the policy faulted and the previous target was held.
    pub requested: Option<u32>,
    pub target_executors: u32,
    pub clamped: bool,
    pub held: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_open: Option<bool>,
    pub observation_digest: String,
    pub features: DecisionFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub time: f64,
    pub reason: String,
}

/// Billable executor count from `time` until the next level change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutorLevel {
    pub time: f64,
    pub executors: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub job: u32,
    pub stage: u32,
    pub task: u32,
    pub executor: u32,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrainRecord {
    pub executor: u32,
    pub start: f64,
    pub complete: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub policy: String,
    pub seed: u64,
    pub vcpus_per_executor: u32,
    pub slots_per_executor: u32,
    pub min_executors: u32,
    pub max_executors: u32,
    pub initial_target: u32,
}

/// Everything one simulation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub header: RunHeader,
    pub jobs: Vec<JobOutcome>,
    pub ticks: Vec<DecisionRecord>,
    pub faults: Vec<FaultRecord>,
    pub executor_levels: Vec<ExecutorLevel>,
    pub tasks: Vec<TaskRecord>,
    pub drains: Vec<DrainRecord>,
    pub ledger: Option<InferenceCostLedger>,
    pub end_time: f64,
    pub vcpu_seconds: f64,
}

impl RunRecord {
    /// Rectangular integral of billable executors times vcpus up to `end_time`.
    pub fn integrate_vcpu_seconds(&self) -> f64 {
        integrate_levels(&self.executor_levels, self.header.vcpus_per_executor, self.end_time)
    }

    /// Targets applied at each tick, in order.
    pub fn targets(&self) -> Vec<u32> {
        self.ticks.iter().map(|t| t.target_executors).collect()
    }

    /// Copy with every wall-clock dependent field cleared, for comparing
    /// runs whose only difference is where the policy executed.
    pub fn without_latency(&self) -> RunRecord {
        let mut r = self.clone();
        r.ledger = None;
        r.header.policy.clear();
        r.header.run_id.clear();
        for t in &mut r.ticks {
            t.justification = None;
            t.gate_open = None;
        }
        r
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |rec: RunLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")
        };
        line(RunLine::Header {
            schema: RUN_SCHEMA.into(),
            header: self.header.clone(),
        })?;
        for j in &self.jobs {
            line(RunLine::Job(j.clone()))?;
        }
        for t in &self.ticks {
            line(RunLine::Tick(t.clone()))?;
        }
        for f in &self.faults {
            line(RunLine::Fault(f.clone()))?;
        }
        for l in &self.executor_levels {
            line(RunLine::Executors(*l))?;
        }
        for t in &self.tasks {
            line(RunLine::Task(*t))?;
        }
        for d in &self.drains {
            line(RunLine::Drain(*d))?;
        }
        if let Some(ledger) = &self.ledger {
            for e in &ledger.entries {
                line(RunLine::Ledger(e.clone()))?;
            }
        }
        line(RunLine::Summary {
            end_time: self.end_time,
            vcpu_seconds: self.vcpu_seconds,
            has_ledger: self.ledger.is_some(),
        })
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<RunRecord> {
        let mut header = None;
        let mut rec = RunRecord {
            header: RunHeader {
                run_id: String::new(),
                policy: String::new(),
                seed: 0,
                vcpus_per_executor: 0,
                slots_per_executor: 0,
                min_executors: 0,
                max_executors: 0,
                initial_target: 0,
            },
            jobs: Vec::new(),
            ticks: Vec::new(),
            faults: Vec::new(),
            executor_levels: Vec::new(),
            tasks: Vec::new(),
            drains: Vec::new(),
            ledger: None,
            end_time: 0.0,
            vcpu_seconds: 0.0,
        };
        let mut entries = Vec::new();
        let mut summary = false;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<run record>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RunLine = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidInput(format!("run record line {}: {e}", n + 1)))?;
            match parsed {
                RunLine::Header { schema, header: h } => {
                    if schema != RUN_SCHEMA {
                        return Err(Error::InvalidInput(format!("unsupported schema {schema}")));
                    }
                    header = Some(h);
                }
                RunLine::Job(j) => rec.jobs.push(j),
                RunLine::Tick(t) => rec.ticks.push(t),
                RunLine::Fault(f) => rec.faults.push(f),
                RunLine::Executors(l) => rec.executor_levels.push(l),
                RunLine::Task(t) => rec.tasks.push(t),
                RunLine::Drain(d) => rec.drains.push(d),
                RunLine::Ledger(e) => entries.push(e),
                RunLine::Summary {
                    end_time,
                    vcpu_seconds,
                    has_ledger,
                } => {
                    rec.end_time = end_time;
                    rec.vcpu_seconds = vcpu_seconds;
                    if has_ledger {
                        rec.ledger = Some(InferenceCostLedger::default());
                    }
                    summary = true;
                }
            }
        }
        rec.header = header.ok_or_else(|| Error::InvalidInput("run record has no header".into()))?;
        if !summary {
            return Err(Error::InvalidInput("run record has no summary".into()));
        }
        if let Some(l) = rec.ledger.as_mut() {
            l.entries = entries;
        } else if !entries.is_empty() {
            return Err(Error::InvalidInput("ledger entries without a ledger".into()));
        }
        rec.check()?;
        Ok(rec)
    }

    /// Structural checks on a record: increasing tick times and an exact
    /// vcpu integral.
    pub fn check(&self) -> Result<()> {
        if self.ticks.windows(2).any(|w| !(w[0].time < w[1].time)) {
            return Err(Error::InvalidInput("tick times not strictly increasing".into()));
        }
        if self.executor_levels.windows(2).any(|w| w[0].time > w[1].time) {
            return Err(Error::InvalidInput("executor levels out of order".into()));
        }
        let integral = self.integrate_vcpu_seconds();
        if (integral - self.vcpu_seconds).abs() > 1e-6 * integral.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "vcpu_seconds {} disagrees with integral {integral}",
                self.vcpu_seconds
            )));
        }
        if self.ticks.iter().any(|t| {
            !t.time.is_finite() || t.target_executors < self.header.min_executors
                || t.target_executors > self.header.max_executors
        }) {
            return Err(Error::InvalidInput("tick outside configured bounds".into()));
        }
        Ok(())
    }
}

/// Rectangular integral of a piecewise-constant executor count times vcpus
/// over `[0, end]`.
pub fn integrate_levels(levels: &[ExecutorLevel], vcpus: u32, end: f64) -> f64 {
    let vcpus = f64::from(vcpus);
    let mut total = 0.0;
    for (i, level) in levels.iter().enumerate() {
        let until = levels.get(i + 1).map_or(end, |n| n.time).min(end);
        if until > level.time {
            total += f64::from(level.executors) * vcpus * (until - level.time);
        }
    }
    total
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum RunLine {
    Header { schema: String, header: RunHeader },
    Job(JobOutcome),
    Tick(DecisionRecord),
    Fault(FaultRecord),
    Executors(ExecutorLevel),
    Task(TaskRecord),
    Drain(DrainRecord),
    Ledger(LedgerEntry),
    Summary {
        end_time: f64,
        vcpu_seconds: f64,
        has_ledger: bool,
    },
}
