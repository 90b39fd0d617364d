//! Deterministic discrete-event simulation of an executor pool running job
//! DAGs under an autoscaling policy.
//!
//! Events at equal timestamps are ordered by kind rank and then by insertion
//! sequence. Pending tasks are dispatched in (job, stage, task) order onto the
//! lowest-numbered active executor with a free slot, once per timestamp and
//! immediately before each decision tick.

mod record;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use sha2::{Digest, Sha256};

use crate::config::{ClusterConfig, PolicyConfig};
use crate::error::{Error, Result};
use crate::policy::{
    dominant_subclass, serialize_observation, ClusterView, CostModel, InferenceCostLedger,
    JobDigest, LedgerEntry, Observation, Policy, PolicyFailure, ScalingAction, StaticPolicy,
    OBSERVATION_SCHEMA_VERSION,
};
use crate::workload::{DependencyKind, JobSpec};

pub use record::{
    integrate_levels, DecisionFeatures, DecisionRecord, DrainRecord, ExecutorLevel, FaultRecord,
    JobOutcome, RunHeader, RunRecord, TaskRecord, RUN_SCHEMA,
};

/// Simulated seconds after which a run that cannot finish is abandoned.
const HORIZON: f64 = 1.0e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cluster: ClusterConfig,
    pub policy: PolicyConfig,
    /// Straggler coefficient of the task duration model.
    pub straggler_coefficient: f64,
}

impl SimConfig {
    pub fn new(cluster: ClusterConfig, policy: PolicyConfig, straggler_coefficient: f64) -> Self {
        Self {
            cluster,
            policy,
            straggler_coefficient,
        }
    }

    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self::new(
            cfg.cluster.clone(),
            cfg.policy.clone(),
            cfg.workload.straggler_coefficient,
        )
    }

    /// A cluster pinned at `executors` with no capacity bound in practice.
    pub fn unconstrained(cluster: &ClusterConfig, executors: u32, straggler: f64) -> Self {
        let mut cluster = cluster.clone();
        cluster.min_executors = executors;
        cluster.max_executors = executors;
        cluster.initial_executors = executors;
        Self::new(cluster, PolicyConfig::default(), straggler)
    }
}

/// Pending demand in task slots: runnable tasks not yet started, capped at
/// the slot capacity of a maximally scaled cluster.
pub fn step_demand(cluster: &ClusterConfig, runnable: impl IntoIterator<Item = u64>) -> u64 {
    runnable.into_iter().sum::<u64>().min(cluster.slot_cap())
}

/// Makespan of a workload on a fixed pool of `cfg.cluster.max_executors`.
pub fn static_makespan(jobs: &[JobSpec], cfg: &SimConfig) -> f64 {
    let mut policy = StaticPolicy::new(cfg.cluster.max_executors);
    let record = simulate(jobs, &mut policy, cfg, 0).expect("static policy cannot fault");
    let start = jobs.iter().map(|j| j.submit_time).fold(f64::INFINITY, f64::min);
    record.end_time - start
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    JobArrival { job: u32 },
    StageReady { job: u32, stage: u32 },
    TaskFinish { job: u32, stage: u32, task: u32, executor: u32 },
    DrainComplete { executor: u32 },
    DecisionTick,
    ExecutorReady { executor: u32 },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::JobArrival { .. } => 0,
            EventKind::StageReady { .. } => 1,
            EventKind::TaskFinish { .. } => 2,
            EventKind::DrainComplete { .. } => 3,
            EventKind::DecisionTick => 4,
            EventKind::ExecutorReady { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExecState {
    Provisioning,
    Active,
    Draining,
    Terminated,
}

#[derive(Debug, Clone)]
struct Executor {
    state: ExecState,
    busy: u32,
    drain_start: f64,
}

#[derive(Debug, Clone, Default)]
struct StageState {
    waiting_parents: usize,
    ready: bool,
    next_task: u32,
    done_tasks: u32,
}

#[derive(Debug, Clone)]
struct JobState {
    arrived: bool,
    finish: Option<f64>,
    stages: Vec<StageState>,
    stages_done: u32,
    shuffled_bytes: u64,
    /// Shuffle bytes each stage reads from its wide parents.
    shuffle_read: Vec<u64>,
}

struct Sim<'a, P: Policy + ?Sized> {
    jobs: &'a [JobSpec],
    cfg: &'a SimConfig,
    policy: &'a mut P,
    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    state: Vec<JobState>,
    /// (job, stage) pairs with ready, unstarted tasks.
    runnable: BTreeSet<(u32, u32)>,
    executors: Vec<Executor>,
    free: BTreeSet<u32>,
    active: u32,
    provisioning: VecDeque<u32>,
    draining: u32,
    target: u32,
    unfinished: usize,
    recent: VecDeque<ScalingAction>,
    record: RunRecord,
}

/// Runs `workload` to completion under `policy`.
///
/// A recoverable policy failure holds the previous target and is logged; a
/// fatal one aborts with [`Error::PolicyFault`] carrying the partial record.
pub fn simulate<P: Policy + ?Sized>(
    workload: &[JobSpec],
    policy: &mut P,
    cfg: &SimConfig,
    seed: u64,
) -> Result<RunRecord> {
    if workload.is_empty() {
        return Err(Error::InvalidInput("workload is empty".into()));
    }
    cfg.cluster.validate()?;
    for job in workload {
        job.validate()?;
    }
    Sim::new(workload, policy, cfg, seed).run()
}

impl<'a, P: Policy + ?Sized> Sim<'a, P> {
    fn new(jobs: &'a [JobSpec], policy: &'a mut P, cfg: &'a SimConfig, seed: u64) -> Self {
        let c = &cfg.cluster;
        let initial = c.clamp(policy.initial_executors().unwrap_or(c.initial_executors));
        let state = jobs
            .iter()
            .map(|j| JobState {
                arrived: false,
                finish: None,
                stages: j
                    .stages
                    .iter()
                    .map(|s| StageState {
                        waiting_parents: s.parent_ids.len(),
                        ..Default::default()
                    })
                    .collect(),
                stages_done: 0,
                shuffled_bytes: 0,
                shuffle_read: j
                    .stages
                    .iter()
                    .map(|s| {
                        if s.dependency_kind == DependencyKind::Wide {
                            s.parent_ids
                                .iter()
                                .map(|&p| j.stages[p as usize].shuffle_write_bytes)
                                .sum()
                        } else {
                            0
                        }
                    })
                    .collect(),
            })
            .collect();
        let header = RunHeader {
            run_id: String::new(),
            policy: policy.name().to_string(),
            seed,
            vcpus_per_executor: c.vcpus_per_executor,
            slots_per_executor: c.slots_per_executor,
            min_executors: c.min_executors,
            max_executors: c.max_executors,
            initial_target: initial,
        };
        let ledger = policy.tracks_inference_cost().then(InferenceCostLedger::default);
        let mut sim = Sim {
            jobs,
            cfg,
            policy,
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            state,
            runnable: BTreeSet::new(),
            executors: Vec::new(),
            free: BTreeSet::new(),
            active: 0,
            provisioning: VecDeque::new(),
            draining: 0,
            target: initial,
            unfinished: jobs.len(),
            recent: VecDeque::new(),
            record: RunRecord {
                header,
                jobs: Vec::new(),
                ticks: Vec::new(),
                faults: Vec::new(),
                executor_levels: vec![ExecutorLevel {
                    time: 0.0,
                    executors: 0,
                }],
                tasks: Vec::new(),
                drains: Vec::new(),
                ledger,
                end_time: 0.0,
                vcpu_seconds: 0.0,
            },
        };
        for _ in 0..initial {
            let id = sim.executors.len() as u32;
            sim.executors.push(Executor {
                state: ExecState::Active,
                busy: 0,
                drain_start: 0.0,
            });
            sim.free.insert(id);
            sim.active += 1;
        }
        sim.level_changed();
        sim.record.header.run_id = format!("{}@{seed}", sim.record.header.policy);
        for (i, j) in jobs.iter().enumerate() {
            sim.push(j.submit_time, EventKind::JobArrival { job: i as u32 });
        }
        sim.push(0.0, EventKind::DecisionTick);
        sim
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn billable(&self) -> u32 {
        self.active + self.draining
    }

    fn level_changed(&mut self) {
        let executors = self.billable();
        let now = self.now;
        let levels = &mut self.record.executor_levels;
        let last = levels.last_mut().expect("levels start non-empty");
        if last.executors == executors {
            return;
        }
        if last.time == now {
            last.executors = executors;
            if levels.len() >= 2 && levels[levels.len() - 2].executors == executors {
                levels.pop();
            }
        } else {
            levels.push(ExecutorLevel {
                time: now,
                executors,
            });
        }
    }

    fn run(mut self) -> Result<RunRecord> {
        loop {
            match self.events.peek() {
                Some(ev) if ev.time <= self.now => {
                    let ev = self.events.pop().expect("peeked");
                    if ev.kind == EventKind::DecisionTick {
                        self.dispatch();
                    }
                    self.handle(ev)?;
                    if self.unfinished == 0 {
                        break;
                    }
                }
                _ => {
                    self.dispatch();
                    match self.events.peek() {
                        Some(ev) if ev.time > self.now => self.now = ev.time,
                        Some(_) => {}
                        None => break,
                    }
                    if self.now > HORIZON {
                        return Err(Error::InvalidInput(format!(
                            "simulation exceeded {HORIZON} s without finishing"
                        )));
                    }
                }
            }
        }
        self.finish()
    }

    fn finish(mut self) -> Result<RunRecord> {
        self.record.end_time = self.now;
        self.record.vcpu_seconds = self.record.integrate_vcpu_seconds();
        // Executors draining at the end are released with the run.
        for (id, e) in self.executors.iter().enumerate() {
            if e.state == ExecState::Draining {
                self.record.drains.push(DrainRecord {
                    executor: id as u32,
                    start: e.drain_start,
                    complete: self.now,
                });
            }
        }
        for (j, s) in self.jobs.iter().zip(&self.state) {
            let finish = s.finish.expect("all jobs finished");
            self.record.jobs.push(JobOutcome {
                job_id: j.job_id.clone(),
                subclass: j.subclass.id(),
                submit_time: j.submit_time,
                deadline_at: j.deadline_at(),
                finish_time: finish,
                deadline_met: finish <= j.deadline_at(),
            });
        }
        Ok(self.record)
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        match ev.kind {
            EventKind::JobArrival { job } => {
                self.state[job as usize].arrived = true;
                for s in &self.jobs[job as usize].stages {
                    if s.is_source() {
                        self.make_ready(job, s.stage_id);
                    }
                }
            }
            EventKind::StageReady { job, stage } => self.make_ready(job, stage),
            EventKind::TaskFinish {
                job,
                stage,
                executor,
                ..
            } => self.task_finished(job, stage, executor),
            EventKind::DrainComplete { executor } => {
                let e = &mut self.executors[executor as usize];
                debug_assert_eq!(e.state, ExecState::Draining);
                debug_assert_eq!(e.busy, 0);
                e.state = ExecState::Terminated;
                let start = e.drain_start;
                self.draining -= 1;
                self.record.drains.push(DrainRecord {
                    executor,
                    start,
                    complete: self.now,
                });
                self.level_changed();
            }
            EventKind::ExecutorReady { executor } => {
                let e = &mut self.executors[executor as usize];
                if e.state == ExecState::Provisioning {
                    e.state = ExecState::Active;
                    self.provisioning.retain(|&p| p != executor);
                    self.active += 1;
                    self.free.insert(executor);
                    self.level_changed();
                }
            }
            EventKind::DecisionTick => {
                self.tick()?;
                let next = self.now + self.cfg.cluster.decision_interval;
                self.push(next, EventKind::DecisionTick);
            }
        }
        Ok(())
    }

    fn make_ready(&mut self, job: u32, stage: u32) {
        let st = &mut self.state[job as usize].stages[stage as usize];
        st.ready = true;
        self.runnable.insert((job, stage));
    }

    fn task_finished(&mut self, job: u32, stage: u32, executor: u32) {
        let e = &mut self.executors[executor as usize];
        e.busy -= 1;
        match e.state {
            ExecState::Active => {
                self.free.insert(executor);
            }
            ExecState::Draining if e.busy == 0 => {
                self.push(self.now, EventKind::DrainComplete { executor });
            }
            _ => {}
        }

        let spec = &self.jobs[job as usize];
        let js = &mut self.state[job as usize];
        let st = &mut js.stages[stage as usize];
        st.done_tasks += 1;
        if st.done_tasks < spec.stages[stage as usize].task_count {
            return;
        }
        js.stages_done += 1;
        js.shuffled_bytes += spec.stages[stage as usize].shuffle_write_bytes;
        if js.stages_done as usize == spec.stages.len() {
            js.finish = Some(self.now);
            self.unfinished -= 1;
            return;
        }
        let mut newly_ready = Vec::new();
        for child in spec.children(stage) {
            let cs = &mut js.stages[child.stage_id as usize];
            cs.waiting_parents -= 1;
            if cs.waiting_parents == 0 {
                newly_ready.push((child.stage_id, child.dependency_kind));
            }
        }
        for (child, kind) in newly_ready {
            if kind == DependencyKind::Broadcast && self.cfg.cluster.broadcast_latency > 0.0 {
                let at = self.now + self.cfg.cluster.broadcast_latency;
                self.push(at, EventKind::StageReady { job, stage: child });
            } else {
                self.make_ready(job, child);
            }
        }
    }

    fn task_duration(&self, job: u32, stage: u32, task: u32) -> f64 {
        let spec = &self.jobs[job as usize].stages[stage as usize];
        let share = spec.task_skew_shares[task as usize];
        let n = f64::from(spec.task_count);
        let mut d = spec.task_base_duration * (1.0 + self.cfg.straggler_coefficient * n * share);
        if spec.dependency_kind == DependencyKind::Wide {
            let read = self.state[job as usize].shuffle_read[stage as usize] as f64;
            let per_task = read / n;
            d *= 1.0 + per_task / (self.cfg.cluster.shuffle_bandwidth * f64::from(self.active.max(1)));
        }
        d
    }

    fn dispatch(&mut self) {
        while let (Some(&exec), Some(&(job, stage))) = (self.free.first(), self.runnable.first()) {
            let task = {
                let st = &mut self.state[job as usize].stages[stage as usize];
                let t = st.next_task;
                st.next_task += 1;
                if st.next_task == self.jobs[job as usize].stages[stage as usize].task_count {
                    self.runnable.remove(&(job, stage));
                }
                t
            };
            let duration = self.task_duration(job, stage, task);
            let e = &mut self.executors[exec as usize];
            e.busy += 1;
            if e.busy == self.cfg.cluster.slots_per_executor {
                self.free.remove(&exec);
            }
            let finish = self.now + duration;
            self.record.tasks.push(TaskRecord {
                job,
                stage,
                task,
                executor: exec,
                start: self.now,
                finish,
            });
            self.push(
                finish,
                EventKind::TaskFinish {
                    job,
                    stage,
                    task,
                    executor: exec,
                },
            );
        }
    }

    fn runnable_tasks(&self, job: usize) -> u64 {
        let spec = &self.jobs[job];
        self.state[job]
            .stages
            .iter()
            .zip(&spec.stages)
            .filter(|(st, _)| st.ready)
            .map(|(st, s)| u64::from(s.task_count - st.next_task))
            .sum()
    }

    fn observe(&self) -> Observation {
        let c = &self.cfg.cluster;
        let mut jobs = Vec::new();
        for (i, (spec, st)) in self.jobs.iter().zip(&self.state).enumerate() {
            if !st.arrived || st.finish.is_some() {
                continue;
            }
            jobs.push(JobDigest {
                job_id: spec.job_id.clone(),
                subclass: spec.subclass.id(),
                submit_time: spec.submit_time,
                stages_done: st.stages_done,
                stages_total: spec.stages.len() as u32,
                runnable_tasks: self.runnable_tasks(i),
                shuffled_bytes: st.shuffled_bytes,
                time_to_deadline: spec.deadline_at() - self.now,
            });
        }
        let demand = step_demand(c, jobs.iter().map(|j| j.runnable_tasks));
        let vcpu_hours =
            record::integrate_levels(&self.record.executor_levels, c.vcpus_per_executor, self.now)
                / 3600.0;
        Observation {
            schema_version: OBSERVATION_SCHEMA_VERSION,
            sim_time: self.now,
            cluster: ClusterView {
                running_executors: self.active,
                provisioning_executors: self.provisioning.len() as u32,
                draining_executors: self.draining,
                current_target: self.target,
                min_executors: c.min_executors,
                max_executors: c.max_executors,
                slots_per_executor: c.slots_per_executor,
                vcpus_per_executor: c.vcpus_per_executor,
            },
            demand_slots: demand,
            jobs,
            cost_model: CostModel {
                rate_per_vcpu_hour: c.rate_per_vcpu_hour,
                vcpu_hours_so_far: vcpu_hours,
                dollars_so_far: vcpu_hours * c.rate_per_vcpu_hour,
            },
            recent_actions: self.recent.iter().cloned().collect(),
            truncated: false,
            omitted_jobs: 0,
        }
    }

    fn tick(&mut self) -> Result<()> {
        let obs = self.observe();
        let serialized = serialize_observation(&obs, self.cfg.policy.token_bound);
        let digest = hex::encode(&Sha256::digest(serialized.text.as_bytes())[..8]);
        let features = DecisionFeatures {
            dominant_subclass: dominant_subclass(&obs),
            active_jobs: obs.jobs.len() as u32,
            shuffled_bytes: obs.jobs.iter().map(|j| j.shuffled_bytes).sum(),
        };
        let running = self.billable();

        let (requested, justification, gate_open, ledger) = match self.policy.decide(&obs) {
            Ok(d) => (
                Some(d.action.target_executors),
                d.action.justification,
                d.gate_open,
                d.ledger,
            ),
            Err(PolicyFailure::Recoverable { reason, ledger }) => {
                self.record.faults.push(FaultRecord {
                    time: self.now,
                    reason,
                });
                (None, None, None, Some(ledger.unwrap_or(LedgerEntry::faulted(0.0))))
            }
            Err(PolicyFailure::Fatal { reason }) => {
                let mut partial = self.record.clone();
                partial.end_time = self.now;
                partial.vcpu_seconds = partial.integrate_vcpu_seconds();
                partial.faults.push(FaultRecord {
                    time: self.now,
                    reason: reason.clone(),
                });
                return Err(Error::PolicyFault {
                    at: self.now,
                    reason,
                    partial: Box::new(partial),
                });
            }
        };
        if let Some(l) = self.record.ledger.as_mut() {
            l.push(ledger.unwrap_or(LedgerEntry::priced(0, 0, 0.0, Default::default())));
        }

        let applied = match requested {
            Some(r) => self.cfg.cluster.clamp(r),
            None => self.target,
        };
        self.record.ticks.push(DecisionRecord {
            time: self.now,
            demand_slots: obs.demand_slots,
            running_executors: running,
            requested,
            target_executors: applied,
            clamped: requested.is_some_and(|r| r != applied),
            held: requested.is_none(),
            justification: justification.clone(),
            gate_open,
            observation_digest: digest,
            features,
        });
        if requested.is_some() {
            self.recent.push_back(ScalingAction {
                target_executors: applied,
                justification: justification.map(|mut j| {
                    if j.len() > 256 {
                        let mut cut = 256;
                        while !j.is_char_boundary(cut) {
                            cut -= 1;
                        }
                        j.truncate(cut);
                    }
                    j
                }),
            });
            while self.recent.len() > self.cfg.policy.recent_actions {
                self.recent.pop_front();
            }
        }
        self.target = applied;
        self.scale_to(applied);
        Ok(())
    }

    fn scale_to(&mut self, target: u32) {
        let live = self.active + self.provisioning.len() as u32;
        if target > live {
            let ready_at = self.now + self.cfg.cluster.provisioning_latency;
            for _ in live..target {
                let id = self.executors.len() as u32;
                self.executors.push(Executor {
                    state: ExecState::Provisioning,
                    busy: 0,
                    drain_start: 0.0,
                });
                self.provisioning.push_back(id);
                self.push(ready_at, EventKind::ExecutorReady { executor: id });
            }
            return;
        }
        let mut excess = live - target;
        // Cancel the most recent provisioning requests first.
        while excess > 0 {
            let Some(id) = self.provisioning.pop_back() else { break };
            self.executors[id as usize].state = ExecState::Terminated;
            excess -= 1;
        }
        if excess == 0 {
            return;
        }
        // Then drain active executors: idlest first, newest first among equals.
        let mut candidates: Vec<(u32, std::cmp::Reverse<u32>)> = self
            .executors
            .iter()
            .enumerate()
            .filter(|(_, e)| e.state == ExecState::Active)
            .map(|(id, e)| (e.busy, std::cmp::Reverse(id as u32)))
            .collect();
        candidates.sort();
        for (busy, std::cmp::Reverse(id)) in candidates.into_iter().take(excess as usize) {
            let e = &mut self.executors[id as usize];
            e.state = ExecState::Draining;
            e.drain_start = self.now;
            self.free.remove(&id);
            self.active -= 1;
            self.draining += 1;
            if busy == 0 {
                self.push(self.now, EventKind::DrainComplete { executor: id });
            }
        }
    }
}
