use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::policy::protocol::ClientFrame;
use crate::policy::{ExternalPolicy, ExternalPolicyOptions};
use crate::sim::{simulate, RunRecord, SimConfig};
use crate::workload::{registry, Generator, SubclassId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCase {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolCheckReport {
    pub command: Vec<String>,
    pub cases: Vec<CheckCase>,
    pub ticks: usize,
    pub faults: usize,
    pub elapsed_secs: f64,
}

impl ProtocolCheckReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn case(&self, name: &str) -> Option<&CheckCase> {
        self.cases.iter().find(|c| c.name == name)
    }
}

const PROBE_JOBS: usize = 2;
const PROBE_SEED: u64 = 7;
/// Fixed SLA median so the probe needs no calibration.
const PROBE_MEDIAN: f64 = 600.0;

fn case(name: &str, passed: bool, detail: impl Into<String>) -> CheckCase {
    CheckCase {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Every faulted tick must hold the previous target and request nothing.
/// A fatal fault ends the run at `fatal_at` without a tick.
fn held_semantics(record: &RunRecord, fatal_at: Option<f64>) -> Result<usize, String> {
    let mut prev = record.header.initial_target;
    let mut held = 0;
    for t in &record.ticks {
        if t.held {
            held += 1;
            if t.target_executors != prev || t.requested.is_some() {
                return Err(format!(
                    "tick at {} held {} but previous target was {prev}",
                    t.time, t.target_executors
                ));
            }
        }
        prev = t.target_executors;
    }
    for f in &record.faults {
        if Some(f.time) == fatal_at && std::ptr::eq(f, record.faults.last().expect("non-empty")) {
            continue;
        }
        if !record.ticks.iter().any(|t| t.held && t.time == f.time) {
            return Err(format!("fault at {} has no held tick", f.time));
        }
    }
    Ok(held)
}

/// Conformance-tests an external policy command: handshake, error frames for
/// malformed requests, and a short simulation checking ledger completeness
/// and the held-target fallback on faults.
pub fn protocol_check(command: &[String], cfg: &Config, timeout: Duration) -> ProtocolCheckReport {
    let start = Instant::now();
    let mut opts = ExternalPolicyOptions::from_config(&cfg.policy);
    opts.timeout = timeout;
    let mut cases = Vec::new();
    let mut ticks = 0;
    let mut faults = 0;
    let finish = |cases, ticks, faults| ProtocolCheckReport {
        command: command.to_vec(),
        cases,
        ticks,
        faults,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };

    match ExternalPolicy::spawn("probe", command, opts.clone()) {
        Ok(mut p) => {
            cases.push(case(
                "handshake",
                true,
                format!("client {}", p.client_name().unwrap_or("(unnamed)")),
            ));
            cases.push(match p.probe_raw("this is not a frame\n") {
                Ok(ClientFrame::Error { code, .. }) => {
                    case("malformed_request_error_frame", true, format!("code {code}"))
                }
                Ok(other) => case("malformed_request_error_frame", false, format!("got {other:?}")),
                Err(e) => case("malformed_request_error_frame", false, e),
            });
        }
        Err(e) => {
            cases.push(case("handshake", false, e.to_string()));
            return finish(cases, ticks, faults);
        }
    }

    let sub: SubclassId = registry()[0].id();
    let mut cfg = cfg.clone();
    cfg.workload.sla_medians.insert(sub, PROBE_MEDIAN);
    let jobs = Generator::new(&cfg.workload, &cfg.cluster).and_then(|g| {
        g.generate_workload(&sub.registered()?, PROBE_JOBS, PROBE_SEED)
    });
    let jobs = match jobs {
        Ok(j) => j,
        Err(e) => {
            cases.push(case("simulation_completes", false, e.to_string()));
            return finish(cases, ticks, faults);
        }
    };
    let sim_cfg = SimConfig::from_config(&cfg);
    let outcome = ExternalPolicy::spawn("probe", command, opts)
        .and_then(|mut p| simulate(&jobs, &mut p, &sim_cfg, PROBE_SEED));
    let mut fatal_at = None;
    let record = match outcome {
        Ok(r) => {
            cases.push(case("simulation_completes", true, format!("{} ticks", r.ticks.len())));
            r
        }
        Err(crate::Error::PolicyFault { at, reason, partial }) => {
            cases.push(case(
                "simulation_completes",
                false,
                format!("fatal fault at t={at}: {reason}"),
            ));
            fatal_at = Some(at);
            *partial
        }
        Err(e) => {
            cases.push(case("simulation_completes", false, e.to_string()));
            return finish(cases, ticks, faults);
        }
    };
    ticks = record.ticks.len();
    faults = record.faults.len();
    let entries = record.ledger.as_ref().map_or(0, |l| l.len());
    cases.push(case(
        "ledger_complete",
        entries == ticks,
        format!("{entries} ledger entries for {ticks} ticks"),
    ));
    cases.push(match held_semantics(&record, fatal_at) {
        Ok(held) => case("faults_hold_previous_target", true, format!("{held} held ticks")),
        Err(e) => case("faults_hold_previous_target", false, e),
    });
    cases.push(case(
        "no_faults",
        faults == 0,
        record
            .faults
            .first()
            .map_or_else(|| "0 faults".to_string(), |f| format!("{faults} faults, first: {}", f.reason)),
    ));
    finish(cases, ticks, faults)
}
