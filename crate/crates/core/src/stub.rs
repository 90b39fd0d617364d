//! In-tree reference client for the policy protocol. The deterministic
//! modes mirror the built-in rules; the misbehaving ones exist to exercise
//! the host's fault handling.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::policy::protocol::{self, ClientFrame, HostFrame, PROTOCOL_VERSION};
use crate::policy::{count_tokens, reactive_target, Observation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StubMode {
    /// Keep whatever is running.
    Echo,
    /// The reactive rule.
    RuleMirror { headroom: f64 },
    /// The reactive rule with a templated justification.
    StubAgent,
    /// Rule path unless recent demand is volatile, then the agent path.
    HybridGate { threshold: f64 },
    /// Rule path, but every `every`-th reply is delayed.
    Slow { every: u64, delay_ms: u64 },
    /// Rule path, but every `every`-th reply is garbage.
    Malformed { every: u64 },
    /// Exits after answering `after` requests.
    Crash { after: u64 },
    /// Handshakes, then never answers.
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenReport {
    SelfCounted,
    HostCounted,
}

/// Demand history length for the volatility proxy.
const GATE_WINDOW: usize = 5;

pub struct StubClient {
    mode: StubMode,
    tokens: TokenReport,
    handled: u64,
    demand: VecDeque<f64>,
}

impl StubClient {
    pub fn new(mode: StubMode, tokens: TokenReport) -> Self {
        Self {
            mode,
            tokens,
            handled: 0,
            demand: VecDeque::with_capacity(GATE_WINDOW),
        }
    }

    /// Coefficient of variation of recent demand.
    fn volatility(&self) -> f64 {
        let n = self.demand.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.demand.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return 0.0;
        }
        let var = self.demand.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean
    }

    fn act(&mut self, seq: u64, obs: &Observation, request: &str) -> ClientFrame {
        if self.demand.len() == GATE_WINDOW {
            self.demand.pop_front();
        }
        self.demand.push_back(obs.demand_slots as f64);
        let rule = |h: f64| reactive_target(obs, h).target_executors;
        let (target, justification, gate_open) = match self.mode {
            StubMode::Echo => (obs.cluster.running_executors, None, None),
            StubMode::RuleMirror { headroom } => (rule(headroom), None, None),
            StubMode::StubAgent => {
                let t = rule(1.0);
                (t, Some(justify(obs, t)), None)
            }
            StubMode::HybridGate { threshold } => {
                if self.volatility() > threshold {
                    let t = rule(1.0);
                    (t, Some(justify(obs, t)), Some(true))
                } else {
                    (rule(1.0), None, Some(false))
                }
            }
            _ => (rule(1.0), None, None),
        };
        let mut frame = ClientFrame::Action {
            seq,
            target_executors: target,
            justification,
            tokens_in: None,
            tokens_out: None,
            gate_open,
        };
        if self.tokens == TokenReport::SelfCounted {
            let out = count_tokens(&protocol::encode(&frame)) as u64;
            if let ClientFrame::Action {
                tokens_in,
                tokens_out,
                ..
            } = &mut frame
            {
                *tokens_in = Some(count_tokens(request) as u64);
                *tokens_out = Some(out);
            }
        }
        frame
    }
}

fn justify(obs: &Observation, target: u32) -> String {
    let deadline = obs
        .jobs
        .iter()
        .map(|j| j.time_to_deadline)
        .min_by(f64::total_cmp);
    match deadline {
        Some(d) => format!(
            "demand {} slots over {} jobs, nearest deadline in {:.0}s; target {} executors",
            obs.demand_slots,
            obs.jobs.len(),
            d,
            target
        ),
        None => format!(
            "demand {} slots, no active jobs; target {} executors",
            obs.demand_slots, target
        ),
    }
}

fn send<W: Write>(out: &mut W, frame: &ClientFrame) -> std::io::Result<()> {
    out.write_all(protocol::encode(frame).as_bytes())?;
    out.flush()
}

fn error_frame(seq: Option<u64>, code: &str, message: String) -> ClientFrame {
    ClientFrame::Error {
        seq,
        code: code.into(),
        message,
    }
}

/// Serves requests until the input closes (or the mode says to stop).
pub fn serve_stub<R: BufRead, W: Write>(
    mode: StubMode,
    tokens: TokenReport,
    input: R,
    mut out: W,
) -> std::io::Result<()> {
    let mut client = StubClient::new(mode, tokens);
    let mut greeted = false;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = match protocol::decode_host(&line) {
            Ok(f) => f,
            Err(e) => {
                let seq = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("seq").and_then(Value::as_u64));
                send(&mut out, &error_frame(seq, "malformed", e.to_string()))?;
                continue;
            }
        };
        match frame {
            HostFrame::Hello { protocol, .. } => {
                if protocol != PROTOCOL_VERSION {
                    send(
                        &mut out,
                        &error_frame(None, "version", format!("unsupported protocol {protocol}")),
                    )?;
                    return Ok(());
                }
                greeted = true;
                send(
                    &mut out,
                    &ClientFrame::Hello {
                        protocol: PROTOCOL_VERSION.into(),
                        name: Some(format!("stub-{}", mode_name(mode))),
                    },
                )?;
            }
            HostFrame::Decide { seq, observation } => {
                if !greeted {
                    send(&mut out, &error_frame(Some(seq), "handshake", "decide before hello".into()))?;
                    continue;
                }
                let obs: Observation = match serde_json::from_value(observation) {
                    Ok(o) => o,
                    Err(e) => {
                        send(&mut out, &error_frame(Some(seq), "malformed", e.to_string()))?;
                        continue;
                    }
                };
                client.handled += 1;
                let n = client.handled;
                match mode {
                    StubMode::Silent => continue,
                    StubMode::Crash { after } if n > after => return Ok(()),
                    StubMode::Malformed { every } if every > 0 && n.is_multiple_of(every) => {
                        out.write_all(b"{\"frame\":\"action\",\"seq\":")?;
                        out.write_all(b"oops\n")?;
                        out.flush()?;
                        continue;
                    }
                    StubMode::Slow { every, delay_ms } if every > 0 && n.is_multiple_of(every) => {
                        thread::sleep(Duration::from_millis(delay_ms));
                    }
                    _ => {}
                }
                let reply = client.act(seq, &obs, &line);
                send(&mut out, &reply)?;
            }
            HostFrame::ToolResult { .. } => {}
        }
    }
    Ok(())
}

pub fn mode_name(mode: StubMode) -> &'static str {
    match mode {
        StubMode::Echo => "echo",
        StubMode::RuleMirror { .. } => "rule-mirror",
        StubMode::StubAgent => "stub-agent",
        StubMode::HybridGate { .. } => "hybrid-gate",
        StubMode::Slow { .. } => "slow",
        StubMode::Malformed { .. } => "malformed",
        StubMode::Crash { .. } => "crash",
        StubMode::Silent => "silent",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClusterConfig;
    use crate::policy::serialize_observation;

    fn run(mode: StubMode, requests: &[String]) -> Vec<String> {
        let mut input = protocol::encode(&protocol::host_hello(4096));
        for r in requests {
            input.push_str(r);
        }
        let mut out = Vec::new();
        serve_stub(mode, TokenReport::SelfCounted, input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap().lines().map(String::from).collect()
    }

    fn request(seq: u64, demand: u64, running: u32) -> String {
        let mut obs = Observation::empty(&ClusterConfig::default());
        obs.demand_slots = demand;
        obs.cluster.running_executors = running;
        protocol::encode_decide(seq, &serialize_observation(&obs, 4096).text)
    }

    fn targets(lines: &[String]) -> Vec<u32> {
        lines[1..]
            .iter()
            .map(|l| match protocol::decode_client(l).unwrap() {
                ClientFrame::Action { target_executors, .. } => target_executors,
                other => panic!("{other:?}"),
            })
            .collect()
    }

    #[test]
    fn echo_returns_running_count() {
        let lines = run(StubMode::Echo, &[request(1, 40, 3), request(2, 0, 7)]);
        assert!(lines[0].contains("\"frame\":\"hello\""));
        assert_eq!(targets(&lines), vec![3, 7]);
    }

    #[test]
    fn one_response_per_request() {
        let reqs: Vec<String> = (1..=20).map(|i| request(i, i * 3, 2)).collect();
        for mode in [
            StubMode::Echo,
            StubMode::RuleMirror { headroom: 1.0 },
            StubMode::StubAgent,
            StubMode::HybridGate { threshold: 0.1 },
        ] {
            assert_eq!(run(mode, &reqs).len(), 21);
        }
    }

    #[test]
    fn infinite_gate_matches_rule_mirror() {
        let reqs: Vec<String> = (1..=30).map(|i| request(i, (i * 37) % 90, 2)).collect();
        let strip = |lines: Vec<String>| targets(&lines);
        assert_eq!(
            strip(run(StubMode::HybridGate { threshold: f64::INFINITY }, &reqs)),
            strip(run(StubMode::RuleMirror { headroom: 1.0 }, &reqs))
        );
    }

    #[test]
    fn malformed_request_gets_error_then_continues() {
        let lines = run(StubMode::Echo, &["garbage\n".to_string(), request(5, 4, 2)]);
        assert!(matches!(
            protocol::decode_client(&lines[1]).unwrap(),
            ClientFrame::Error { .. }
        ));
        assert_eq!(targets(&lines[1..]), vec![2]);
    }

    #[test]
    fn crash_stops_answering() {
        let reqs: Vec<String> = (1..=5).map(|i| request(i, 8, 2)).collect();
        assert_eq!(run(StubMode::Crash { after: 2 }, &reqs).len(), 3);
    }
}
