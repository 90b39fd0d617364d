//! Append-only store of past scaling decisions, queried by nearest
//! neighbour over a small normalized feature vector.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{integrate_levels, DecisionRecord, RunRecord};
use crate::workload::{SkewLevel, SubclassId};

pub const STORE_SCHEMA: &str = "scalebench.decisions/1";
pub const FEATURE_DIM: usize = 3;

/// Byte counts are compressed with log2 and divided by this.
const BYTES_LOG_SCALE: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub id: String,
    pub subclass: Option<SubclassId>,
    /// Demand as a fraction of the slot cap, skew level (0 low, 1 high),
    /// log-scaled cumulative shuffle bytes.
    pub features: [f64; FEATURE_DIM],
    pub time: f64,
    pub requested: Option<u32>,
    pub target_executors: u32,
    /// vCPU-hours billed until the next decision.
    pub cost_delta_vcpu_hours: f64,
    /// Every job in flight at decision time met its deadline.
    pub sla_ok: bool,
    pub source_run: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupQuery {
    #[serde(default)]
    pub subclass: Option<SubclassId>,
    pub features: [f64; FEATURE_DIM],
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupHit {
    pub distance: f64,
    pub entry: DecisionEntry,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    schema: String,
    feature_dim: usize,
}

/// Feature vector for one decision of `record`.
pub fn decision_features(record: &RunRecord, tick: &DecisionRecord) -> [f64; FEATURE_DIM] {
    let cap = f64::from(record.header.max_executors) * f64::from(record.header.slots_per_executor);
    let demand = if cap > 0.0 {
        (tick.demand_slots as f64 / cap).min(1.0)
    } else {
        0.0
    };
    let skew = match tick.features.dominant_subclass {
        Some(s) if s.skew == SkewLevel::High => 1.0,
        _ => 0.0,
    };
    let bytes = (tick.features.shuffled_bytes as f64 + 1.0).log2() / BYTES_LOG_SCALE;
    [demand, skew, bytes]
}

fn entries_for(record: &RunRecord) -> Result<Vec<DecisionEntry>> {
    record.check()?;
    if record.header.run_id.is_empty() {
        return Err(Error::InvalidInput("run record without run id".into()));
    }
    let vcpus = record.header.vcpus_per_executor;
    let levels = &record.executor_levels;
    let mut out = Vec::with_capacity(record.ticks.len());
    for (i, tick) in record.ticks.iter().enumerate() {
        let next = record
            .ticks
            .get(i + 1)
            .map_or(record.end_time, |n| n.time)
            .max(tick.time);
        let billed = integrate_levels(levels, vcpus, next) - integrate_levels(levels, vcpus, tick.time);
        let sla_ok = record
            .jobs
            .iter()
            .filter(|j| j.submit_time <= tick.time && j.finish_time > tick.time)
            .all(|j| j.deadline_met);
        let subclass = tick
            .features
            .dominant_subclass
            .or_else(|| record.jobs.first().map(|j| j.subclass));
        out.push(DecisionEntry {
            id: format!("{}#{i}", record.header.run_id),
            subclass,
            features: decision_features(record, tick),
            time: tick.time,
            requested: tick.requested,
            target_executors: tick.target_executors,
            cost_delta_vcpu_hours: billed / 3600.0,
            sla_ok,
            source_run: record.header.run_id.clone(),
        });
    }
    Ok(out)
}

/// In-memory index over an optional backing file. Readers share it
/// immutably; ingestion needs `&mut`.
#[derive(Debug, Default)]
pub struct DecisionStore {
    path: Option<PathBuf>,
    entries: Vec<DecisionEntry>,
    runs: BTreeSet<String>,
}

impl DecisionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the store file and rebuilds the index.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if !path.exists() {
            let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
            let header = StoreHeader {
                schema: STORE_SCHEMA.into(),
                feature_dim: FEATURE_DIM,
            };
            let mut line = serde_json::to_string(&header)?;
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            return Ok(store);
        }
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header: StoreHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line.map_err(|e| Error::io(path, e))?)?,
            None => return Err(Error::InvalidInput(format!("{}: empty store", path.display()))),
        };
        if header.schema != STORE_SCHEMA || header.feature_dim != FEATURE_DIM {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported store {} (dim {})",
                path.display(),
                header.schema,
                header.feature_dim
            )));
        }
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: DecisionEntry = serde_json::from_str(&line)?;
            store.runs.insert(entry.source_run.clone());
            store.entries.push(entry);
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DecisionEntry] {
        &self.entries
    }

    pub fn contains_run(&self, run_id: &str) -> bool {
        self.runs.contains(run_id)
    }

    /// Adds one entry per decision tick. A run already present adds
    /// nothing; a record that fails its checks adds nothing either.
    pub fn ingest(&mut self, record: &RunRecord) -> Result<usize> {
        if self.runs.contains(&record.header.run_id) {
            return Ok(0);
        }
        let new = entries_for(record)?;
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for e in &new {
                buf.push_str(&serde_json::to_string(e)?);
                buf.push('\n');
            }
            let mut f = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        self.runs.insert(record.header.run_id.clone());
        let n = new.len();
        self.entries.extend(new);
        Ok(n)
    }

    /// The `k` entries closest to the query in Euclidean distance, ties
    /// broken by id. Restricted to the query's subclass when one is given.
    pub fn query(&self, q: &LookupQuery) -> Vec<LookupHit> {
        let mut hits: Vec<LookupHit> = self
            .entries
            .iter()
            .filter(|e| q.subclass.is_none() || e.subclass == q.subclass)
            .map(|e| LookupHit {
                distance: euclidean(&e.features, &q.features),
                entry: e.clone(),
            })
            .collect();
        hits.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.entry.id.cmp(&b.entry.id))
        });
        hits.truncate(q.k);
        hits
    }

    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_export<R: BufRead>(input: R) -> Result<Vec<DecisionEntry>> {
        let mut out = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<export>", e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

fn euclidean(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, f: [f64; 3]) -> DecisionEntry {
        DecisionEntry {
            id: id.into(),
            subclass: None,
            features: f,
            time: 0.0,
            requested: Some(1),
            target_executors: 1,
            cost_delta_vcpu_hours: 0.0,
            sla_ok: true,
            source_run: "r".into(),
        }
    }

    fn store(entries: Vec<DecisionEntry>) -> DecisionStore {
        DecisionStore {
            path: None,
            entries,
            runs: BTreeSet::new(),
        }
    }

    fn q(f: [f64; 3], k: usize) -> LookupQuery {
        LookupQuery {
            subclass: None,
            features: f,
            k,
        }
    }

    #[test]
    fn empty_store_returns_nothing() {
        assert!(DecisionStore::in_memory().query(&q([0.0; 3], 3)).is_empty());
    }

    #[test]
    fn single_entry_always_returned() {
        let s = store(vec![entry("a", [0.2, 1.0, 0.5])]);
        let hits = s.query(&q([0.9, 0.0, 0.0], 1));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].entry.id, "a");
    }

    #[test]
    fn exact_match_ranks_first() {
        let s = store(vec![
            entry("a", [0.1, 0.0, 0.1]),
            entry("b", [0.4, 1.0, 0.3]),
            entry("c", [0.5, 0.0, 0.2]),
        ]);
        let hits = s.query(&q([0.4, 1.0, 0.3], 3));
        assert_eq!(hits[0].entry.id, "b");
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn ties_break_on_id() {
        let s = store(vec![entry("z", [1.0, 0.0, 0.0]), entry("m", [0.0, 1.0, 0.0])]);
        let hits = s.query(&q([0.0, 0.0, 0.0], 2));
        assert_eq!(hits[0].entry.id, "m");
        assert_eq!(hits[1].entry.id, "z");
    }
}
