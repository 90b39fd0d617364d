//! Cost, SLA attainment, responsiveness, thrash and consistency of runs.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RunRecord;
use crate::workload::SubclassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub vcpu_hours: f64,
    /// Infrastructure plus inference dollars.
    pub dollars: f64,
    pub inference_dollars: f64,
}

pub fn cost(record: &RunRecord, rate_per_vcpu_hour: f64) -> Cost {
    let vcpu_hours = record.vcpu_seconds / 3600.0;
    let inference_dollars = record.ledger.as_ref().map_or(0.0, |l| l.total_cost());
    Cost {
        vcpu_hours,
        dollars: vcpu_hours * rate_per_vcpu_hour + inference_dollars,
        inference_dollars,
    }
}

/// Jobs finishing no later than their deadline, over all jobs.
pub fn sla_attainment(record: &RunRecord) -> Result<f64> {
    let (met, total) = sla_counts(record)?;
    Ok(met as f64 / total as f64)
}

fn sla_counts(record: &RunRecord) -> Result<(usize, usize)> {
    if record.jobs.is_empty() {
        return Err(Error::InvalidInput("run has no jobs".into()));
    }
    let met = record
        .jobs
        .iter()
        .filter(|j| j.finish_time <= j.deadline_at)
        .count();
    Ok((met, record.jobs.len()))
}

/// A tick whose demand moved by at least `threshold` relative to the
/// previous tick's demand. Any rise from zero counts.
fn is_transition(prev: u64, cur: u64, threshold: f64) -> bool {
    if prev == 0 {
        return cur > 0;
    }
    (cur as f64 - prev as f64).abs() / prev as f64 >= threshold
}

/// Delays between demand transitions and the first target change in the
/// same direction, at or after the transition tick.
pub fn response_delays(record: &RunRecord, threshold: f64) -> Vec<f64> {
    let ticks = &record.ticks;
    let mut delays = Vec::new();
    for i in 1..ticks.len() {
        let (prev, cur) = (ticks[i - 1].demand_slots, ticks[i].demand_slots);
        if !is_transition(prev, cur, threshold) {
            continue;
        }
        let up = cur > prev;
        let answered = (i..ticks.len()).find(|&j| {
            let before = ticks[j - 1].target_executors;
            let after = ticks[j].target_executors;
            if up {
                after > before
            } else {
                after < before
            }
        });
        delays.push(match answered {
            Some(j) => ticks[j].time - ticks[i].time,
            None => record.end_time - ticks[i].time,
        });
    }
    delays
}

/// Median response delay in seconds; `None` when demand never transitions.
pub fn responsiveness(record: &RunRecord, threshold: f64) -> Option<f64> {
    median(response_delays(record, threshold))
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Applied target changes; the first tick compares against the initial
/// target.
pub fn target_changes(record: &RunRecord) -> usize {
    let mut prev = record.header.initial_target;
    let mut n = 0;
    for t in &record.ticks {
        if t.target_executors != prev {
            n += 1;
        }
        prev = t.target_executors;
    }
    n
}

pub fn job_minutes(record: &RunRecord) -> f64 {
    record
        .jobs
        .iter()
        .map(|j| (j.finish_time - j.submit_time) / 60.0)
        .sum()
}

/// Applied target changes per job-minute.
pub fn thrash(record: &RunRecord) -> Result<f64> {
    let minutes = job_minutes(record);
    if !(minutes > 0.0) {
        return Err(Error::InvalidInput("run has zero job-minutes".into()));
    }
    Ok(target_changes(record) as f64 / minutes)
}

/// Mean over ticks of the population standard deviation of targets across
/// seeds. Sequences of different lengths are compared on their common
/// prefix.
pub fn consistency(targets_by_seed: &[Vec<u32>]) -> Result<f64> {
    if targets_by_seed.len() < 2 {
        return Err(Error::InvalidInput("consistency needs at least two seeds".into()));
    }
    let len = targets_by_seed.iter().map(Vec::len).min().unwrap_or(0);
    if targets_by_seed.iter().any(|t| t.len() != len) {
        debug!("target sequences differ in length; using the first {len} ticks");
    }
    if len == 0 {
        return Err(Error::InvalidInput("no common decision ticks".into()));
    }
    let k = targets_by_seed.len() as f64;
    let mut total = 0.0;
    for i in 0..len {
        let mean = targets_by_seed.iter().map(|t| f64::from(t[i])).sum::<f64>() / k;
        let var = targets_by_seed
            .iter()
            .map(|t| (f64::from(t[i]) - mean).powi(2))
            .sum::<f64>()
            / k;
        total += var.sqrt();
    }
    Ok(total / len as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobDetail {
    pub job_id: String,
    pub runtime: f64,
    pub slack: f64,
    pub deadline_met: bool,
}

/// One row per (policy, subclass, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub policy: String,
    pub subclass: SubclassId,
    pub environment: String,
    pub seed: u64,
    pub vcpu_hours: f64,
    pub dollars: f64,
    pub inference_dollars: f64,
    pub sla_attainment: f64,
    pub jobs_met: usize,
    pub jobs_total: usize,
    pub responsiveness_median: Option<f64>,
    pub thrash: f64,
    /// Filled once every seed of the (policy, subclass) pair has run.
    pub consistency_sigma: Option<f64>,
    pub decision_ticks: usize,
    pub faults: usize,
    pub jobs: Vec<JobDetail>,
}

pub const DEFAULT_ENVIRONMENT: &str = "sim";

pub fn metric_record(
    record: &RunRecord,
    subclass: SubclassId,
    rate_per_vcpu_hour: f64,
    responsiveness_threshold: f64,
) -> Result<MetricRecord> {
    let c = cost(record, rate_per_vcpu_hour);
    let (met, total) = sla_counts(record)?;
    Ok(MetricRecord {
        policy: record.header.policy.clone(),
        subclass,
        environment: DEFAULT_ENVIRONMENT.into(),
        seed: record.header.seed,
        vcpu_hours: c.vcpu_hours,
        dollars: c.dollars,
        inference_dollars: c.inference_dollars,
        sla_attainment: met as f64 / total as f64,
        jobs_met: met,
        jobs_total: total,
        responsiveness_median: responsiveness(record, responsiveness_threshold),
        thrash: thrash(record)?,
        consistency_sigma: None,
        decision_ticks: record.ticks.len(),
        faults: record.faults.len(),
        jobs: record
            .jobs
            .iter()
            .map(|j| JobDetail {
                job_id: j.job_id.clone(),
                runtime: j.finish_time - j.submit_time,
                slack: j.deadline_at - j.finish_time,
                deadline_met: j.finish_time <= j.deadline_at,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DecisionFeatures, DecisionRecord, ExecutorLevel, JobOutcome, RunHeader};
    use std::str::FromStr;

    fn sub() -> SubclassId {
        SubclassId::from_str("c1-small-low").unwrap()
    }

    fn run(vcpus: u32, levels: &[(f64, u32)], end: f64) -> RunRecord {
        let mut r = RunRecord {
            header: RunHeader {
                run_id: "t".into(),
                policy: "p".into(),
                seed: 0,
                vcpus_per_executor: vcpus,
                slots_per_executor: 4,
                min_executors: 0,
                max_executors: 64,
                initial_target: levels.first().map_or(0, |l| l.1),
            },
            jobs: vec![],
            ticks: vec![],
            faults: vec![],
            executor_levels: levels
                .iter()
                .map(|&(time, executors)| ExecutorLevel { time, executors })
                .collect(),
            tasks: vec![],
            drains: vec![],
            ledger: None,
            end_time: end,
            vcpu_seconds: 0.0,
        };
        r.vcpu_seconds = r.integrate_vcpu_seconds();
        r
    }

    fn job(submit: f64, finish: f64, deadline_at: f64) -> JobOutcome {
        JobOutcome {
            job_id: format!("j{submit}"),
            subclass: sub(),
            submit_time: submit,
            deadline_at,
            finish_time: finish,
            deadline_met: finish <= deadline_at,
        }
    }

    fn tick(time: f64, demand: u64, target: u32) -> DecisionRecord {
        DecisionRecord {
            time,
            demand_slots: demand,
            running_executors: target,
            requested: Some(target),
            target_executors: target,
            clamped: false,
            held: false,
            justification: None,
            gate_open: None,
            observation_digest: String::new(),
            features: DecisionFeatures {
                dominant_subclass: None,
                active_jobs: 0,
                shuffled_bytes: 0,
            },
        }
    }

    #[test]
    fn cost_rectangles() {
        assert_eq!(cost(&run(2, &[(0.0, 4)], 1800.0), 1.0).vcpu_hours, 4.0);
        assert_eq!(cost(&run(2, &[(0.0, 4)], 0.0), 1.0).vcpu_hours, 0.0);
        let step = cost(&run(1, &[(0.0, 2), (600.0, 6)], 1200.0), 1.0);
        assert!((step.vcpu_hours - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dollars_scale_with_rate() {
        let r = run(4, &[(0.0, 3), (100.0, 5)], 1000.0);
        let a = cost(&r, 0.05);
        let b = cost(&r, 0.10);
        assert_eq!(b.dollars, 2.0 * a.dollars);
        assert_eq!(a.vcpu_hours, b.vcpu_hours);
    }

    #[test]
    fn sla_counts_boundary_as_met() {
        let mut r = run(1, &[(0.0, 1)], 100.0);
        assert!(sla_attainment(&r).is_err());
        r.jobs = (0..10)
            .map(|i| job(0.0, 50.0, if i < 8 { 60.0 } else { 40.0 }))
            .collect();
        assert_eq!(sla_attainment(&r).unwrap(), 0.8);
        r.jobs = vec![job(0.0, 60.0, 60.0)];
        assert_eq!(sla_attainment(&r).unwrap(), 1.0);
    }

    #[test]
    fn responsiveness_cases() {
        let mut r = run(1, &[(0.0, 2)], 300.0);
        r.ticks = (0..5).map(|i| tick(i as f64 * 30.0, 8, 2)).collect();
        assert_eq!(responsiveness(&r, 0.5), None);

        r.ticks = vec![
            tick(0.0, 8, 2),
            tick(30.0, 8, 2),
            tick(60.0, 20, 2),
            tick(90.0, 20, 5),
        ];
        assert_eq!(responsiveness(&r, 0.5), Some(30.0));
        assert_eq!(median(vec![90.0, 30.0, 60.0]), Some(60.0));
    }

    #[test]
    fn unanswered_transition_runs_to_end() {
        let mut r = run(1, &[(0.0, 2)], 300.0);
        r.ticks = vec![tick(0.0, 8, 2), tick(60.0, 2, 2), tick(90.0, 2, 3)];
        assert_eq!(responsiveness(&r, 0.5), Some(240.0));
    }

    #[test]
    fn thrash_counts_applied_changes() {
        let mut r = run(1, &[(0.0, 2)], 600.0);
        r.jobs = vec![job(0.0, 180.0, 1e9), job(0.0, 180.0, 1e9)];
        r.ticks = vec![tick(0.0, 1, 2), tick(30.0, 1, 3), tick(60.0, 1, 3)];
        assert_eq!(thrash(&r).unwrap(), 1.0 / 6.0);
        r.ticks.push(tick(90.0, 1, 2));
        r.ticks.push(tick(120.0, 1, 4));
        assert_eq!(thrash(&r).unwrap(), 0.5);

        // A clamped request that leaves the target unchanged is not a change.
        let mut clamped = tick(150.0, 1, 4);
        clamped.requested = Some(99);
        clamped.clamped = true;
        r.ticks.push(clamped);
        assert_eq!(thrash(&r).unwrap(), 0.5);
        r.jobs.clear();
        assert!(thrash(&r).is_err());
    }

    #[test]
    fn consistency_cases() {
        assert_eq!(consistency(&[vec![3, 4, 5], vec![3, 4, 5]]).unwrap(), 0.0);
        assert_eq!(consistency(&[vec![4, 4], vec![6, 6]]).unwrap(), 1.0);
        assert_eq!(consistency(&[vec![4, 4, 9], vec![6, 6]]).unwrap(), 1.0);
        assert!(consistency(&[vec![1]]).is_err());
    }
}
