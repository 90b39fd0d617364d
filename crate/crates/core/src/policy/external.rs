use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde_json::{json, Value};

use super::protocol::{self, ClientFrame, HostFrame, PROTOCOL_VERSION};
use super::{
    count_tokens, serialize_observation, Decision, LedgerEntry, Observation, Policy,
    PolicyFailure, ScalingAction, TokenRates,
};
use crate::config::PolicyConfig;
use crate::error::{Error, Result};
use crate::store::{DecisionStore, LookupQuery};

#[derive(Debug, Clone)]
pub struct ExternalPolicyOptions {
    pub timeout: Duration,
    pub token_bound: usize,
    pub rates: TokenRates,
    pub trust_client_tokens: bool,
}

impl ExternalPolicyOptions {
    pub fn from_config(cfg: &PolicyConfig) -> Self {
        Self {
            timeout: Duration::from_secs_f64(cfg.timeout),
            token_bound: cfg.token_bound,
            rates: TokenRates {
                input: cfg.token_rate_in,
                output: cfg.token_rate_out,
            },
            trust_client_tokens: cfg.trust_client_tokens,
        }
    }
}

enum Incoming {
    Line(String),
    Closed,
}

/// A policy living in a child process, driven over its stdin/stdout.
pub struct ExternalPolicy {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    rx: Receiver<Incoming>,
    opts: ExternalPolicyOptions,
    seq: u64,
    store: Option<Arc<DecisionStore>>,
    client_name: Option<String>,
}

impl ExternalPolicy {
    /// Starts `command` and completes the handshake within the decision
    /// timeout.
    pub fn spawn(name: &str, command: &[String], opts: ExternalPolicyOptions) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config(format!("external policy {name} has no command")))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) | Err(_) => {
                        let _ = tx.send(Incoming::Closed);
                        return;
                    }
                    Ok(_) => {
                        if tx.send(Incoming::Line(line)).is_err() {
                            return;
                        }
                    }
                }
            }
        });
        let stdin = child.stdin.take();
        let mut policy = Self {
            name: name.to_string(),
            child,
            stdin,
            rx,
            opts,
            seq: 0,
            store: None,
            client_name: None,
        };
        policy.handshake()?;
        Ok(policy)
    }

    /// Serves `lookup_history` tool calls from `store`.
    pub fn with_store(mut self, store: Arc<DecisionStore>) -> Self {
        self.store = Some(store);
        self
    }

    pub fn client_name(&self) -> Option<&str> {
        self.client_name.as_deref()
    }

    /// Writes `line` verbatim and waits for the next frame. Used by
    /// conformance checks to probe error handling.
    pub fn probe_raw(&mut self, line: &str) -> std::result::Result<ClientFrame, String> {
        self.send(line).map_err(|e| format!("write failed: {e}"))?;
        match self.rx.recv_timeout(self.opts.timeout) {
            Ok(Incoming::Line(l)) => protocol::decode_client(&l).map_err(|e| e.to_string()),
            Ok(Incoming::Closed) | Err(RecvTimeoutError::Disconnected) => {
                Err("process closed its output".into())
            }
            Err(RecvTimeoutError::Timeout) => Err("no reply within timeout".into()),
        }
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin closed"))?;
        stdin.write_all(line.as_bytes())?;
        stdin.flush()
    }

    fn handshake(&mut self) -> Result<()> {
        let hello = protocol::encode(&protocol::host_hello(self.opts.token_bound));
        self.send(&hello)
            .map_err(|e| Error::Protocol(format!("{}: cannot send hello: {e}", self.name)))?;
        match self.rx.recv_timeout(self.opts.timeout) {
            Ok(Incoming::Line(line)) => match protocol::decode_client(&line)? {
                ClientFrame::Hello { protocol, name } if protocol == PROTOCOL_VERSION => {
                    self.client_name = name;
                    Ok(())
                }
                ClientFrame::Hello { protocol, .. } => Err(Error::Protocol(format!(
                    "{}: client speaks {protocol}, host speaks {PROTOCOL_VERSION}",
                    self.name
                ))),
                other => Err(Error::Protocol(format!(
                    "{}: expected hello, got {other:?}",
                    self.name
                ))),
            },
            Ok(Incoming::Closed) | Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol(
                format!("{}: process exited before handshake", self.name),
            )),
            Err(RecvTimeoutError::Timeout) => Err(Error::Protocol(format!(
                "{}: no handshake within {:?}",
                self.name, self.opts.timeout
            ))),
        }
    }

    fn answer_tool(&mut self, obs: &Observation, seq: u64, call: u64, tool: &str, args: &Value) {
        let result = match tool {
            "cost_query" => json!({
                "rate_per_vcpu_hour": obs.cost_model.rate_per_vcpu_hour,
                "vcpu_hours_so_far": obs.cost_model.vcpu_hours_so_far,
                "dollars_so_far": obs.cost_model.dollars_so_far,
            }),
            "cluster_state" => serde_json::to_value(&obs.cluster).expect("serializes"),
            "lookup_history" => match serde_json::from_value::<LookupQuery>(args.clone()) {
                Ok(q) => {
                    let hits = self
                        .store
                        .as_ref()
                        .map(|s| s.query(&q))
                        .unwrap_or_default();
                    serde_json::to_value(hits).expect("serializes")
                }
                Err(e) => json!({ "error": format!("bad lookup_history args: {e}") }),
            },
            other => json!({ "error": format!("unknown tool {other}") }),
        };
        let frame = HostFrame::ToolResult {
            seq,
            call,
            tool: tool.to_string(),
            result,
        };
        if let Err(e) = self.send(&protocol::encode(&frame)) {
            debug!("{}: tool result not delivered: {e}", self.name);
        }
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn tracks_inference_cost(&self) -> bool {
        true
    }

    fn decide(&mut self, obs: &Observation) -> std::result::Result<Decision, PolicyFailure> {
        self.seq += 1;
        let seq = self.seq;
        let serialized = serialize_observation(obs, self.opts.token_bound);
        let request = protocol::encode_decide(seq, &serialized.text);
        let start = Instant::now();
        if let Err(e) = self.send(&request) {
            return Err(PolicyFailure::Fatal {
                reason: format!("cannot write request: {e}"),
            });
        }
        let deadline = start + self.opts.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let recoverable = |reason: String| PolicyFailure::Recoverable {
                reason,
                ledger: Some(LedgerEntry::faulted(start.elapsed().as_secs_f64())),
            };
            let line = match self.rx.recv_timeout(left) {
                Ok(Incoming::Line(line)) => line,
                Ok(Incoming::Closed) | Err(RecvTimeoutError::Disconnected) => {
                    return Err(PolicyFailure::Fatal {
                        reason: "policy process closed its output".into(),
                    })
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(recoverable(format!(
                        "timeout after {:?} waiting for seq {seq}",
                        self.opts.timeout
                    )))
                }
            };
            let frame = match protocol::decode_client(&line) {
                Ok(f) => f,
                Err(e) => {
                    warn!("{}: {e}", self.name);
                    return Err(recoverable(e.to_string()));
                }
            };
            match frame {
                ClientFrame::Action { seq: s, .. } if s < seq => {
                    debug!("{}: dropping stale response for seq {s}", self.name);
                }
                ClientFrame::Action {
                    seq: s,
                    target_executors,
                    justification,
                    tokens_in,
                    tokens_out,
                    gate_open,
                } if s == seq => {
                    let latency = start.elapsed().as_secs_f64();
                    let (tin, tout) = match (self.opts.trust_client_tokens, tokens_in, tokens_out) {
                        (true, Some(i), Some(o)) => (i, o),
                        _ => (count_tokens(&request) as u64, count_tokens(&line) as u64),
                    };
                    return Ok(Decision {
                        action: ScalingAction {
                            target_executors,
                            justification,
                        },
                        ledger: Some(LedgerEntry::priced(tin, tout, latency, self.opts.rates)),
                        gate_open,
                    });
                }
                ClientFrame::Tool {
                    seq: s,
                    call,
                    tool,
                    args,
                } if s == seq => self.answer_tool(obs, seq, call, &tool, &args),
                ClientFrame::Error { seq: s, .. } if s.is_some_and(|s| s < seq) => {}
                ClientFrame::Error { code, message, .. } => {
                    return Err(recoverable(format!("client error {code}: {message}")))
                }
                ClientFrame::Tool { seq: s, .. } if s < seq => {}
                other => {
                    warn!("{}: unexpected frame {:?}", self.name, line);
                    return Err(recoverable(format!("unexpected frame {other:?}")));
                }
            }
        }
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        // Closing stdin asks the client to exit; give it a moment, then kill.
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
