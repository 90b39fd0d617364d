//! Workload model: class taxonomy, job/stage specs and the seeded generator.

mod class;
mod generator;
mod zipf;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use class::{
    registry, validate_split, ClassId, DistributionRole, ScaleLevel, ShuffleBand, SkewLevel,
    Subclass, SubclassId, Template,
};
pub use generator::{derive_seed, splitmix64, Generator};
pub use zipf::zipf_shares;

pub const JOB_SCHEMA: &str = "scalebench.job/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DependencyKind {
    Narrow,
    Wide,
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage_id: u32,
    pub parent_ids: Vec<u32>,
    pub task_count: u32,
    /// Seconds.
    pub task_base_duration: f64,
    pub task_skew_shares: Vec<f64>,
    pub input_bytes: u64,
    pub shuffle_write_bytes: u64,
    /// How this stage reads its parents.
    pub dependency_kind: DependencyKind,
}

impl StageSpec {
    pub fn is_source(&self) -> bool {
        self.parent_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub subclass: Subclass,
    pub seed: u64,
    pub stages: Vec<StageSpec>,
    /// Simulated seconds.
    pub submit_time: f64,
    /// Seconds after submission.
    pub sla_deadline: f64,
}

impl JobSpec {
    pub fn source_input_bytes(&self) -> u64 {
        self.stages
            .iter()
            .filter(|s| s.is_source())
            .map(|s| s.input_bytes)
            .sum()
    }

    pub fn shuffle_bytes(&self) -> u64 {
        self.stages.iter().map(|s| s.shuffle_write_bytes).sum()
    }

    pub fn shuffle_ratio(&self) -> f64 {
        self.shuffle_bytes() as f64 / self.source_input_bytes() as f64
    }

    pub fn task_count(&self) -> u64 {
        self.stages.iter().map(|s| u64::from(s.task_count)).sum()
    }

    pub fn children(&self, stage_id: u32) -> impl Iterator<Item = &StageSpec> {
        self.stages
            .iter()
            .filter(move |s| s.parent_ids.contains(&stage_id))
    }

    /// Absolute deadline in simulated seconds.
    pub fn deadline_at(&self) -> f64 {
        self.submit_time + self.sla_deadline
    }

    /// Checks the structural invariants of a job: topological numbering,
    /// a single sink, normalized positive skew shares and shuffle writes only
    /// towards wide children.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("job {}: {m}", self.job_id)));
        if self.stages.is_empty() {
            return bad("no stages".into());
        }
        if !(self.sla_deadline > 0.0) {
            return bad("sla_deadline must be positive".into());
        }
        if !self.submit_time.is_finite() || self.submit_time < 0.0 {
            return bad("submit_time must be finite and non-negative".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.stage_id as usize != i {
                return bad(format!("stage {} out of order", s.stage_id));
            }
            if s.parent_ids.iter().any(|&p| p >= s.stage_id) {
                return bad(format!("stage {} references a later parent", s.stage_id));
            }
            if s.task_count == 0 || s.task_skew_shares.len() != s.task_count as usize {
                return bad(format!("stage {} task/share count mismatch", s.stage_id));
            }
            if !(s.task_base_duration > 0.0 && s.task_base_duration.is_finite()) {
                return bad(format!("stage {} has a bad base duration", s.stage_id));
            }
            let sum: f64 = s.task_skew_shares.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || s.task_skew_shares.iter().any(|&p| !(p > 0.0)) {
                return bad(format!("stage {} skew shares not a distribution", s.stage_id));
            }
            if s.is_source() && s.dependency_kind != DependencyKind::Narrow {
                return bad(format!("source stage {} must be narrow", s.stage_id));
            }
            let feeds_wide = self
                .children(s.stage_id)
                .any(|c| c.dependency_kind == DependencyKind::Wide);
            if !feeds_wide && s.shuffle_write_bytes != 0 {
                return bad(format!("stage {} writes shuffle without a wide child", s.stage_id));
            }
        }
        let sinks = self
            .stages
            .iter()
            .filter(|s| self.children(s.stage_id).next().is_none())
            .count();
        if sinks != 1 {
            return bad(format!("expected one sink, found {sinks}"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JobLine<'a> {
    schema: std::borrow::Cow<'a, str>,
    job: std::borrow::Cow<'a, JobSpec>,
}

/// Writes one schema-tagged JSON record per job.
pub fn write_jobs<W: Write>(mut out: W, jobs: &[JobSpec]) -> std::io::Result<()> {
    for job in jobs {
        let line = JobLine {
            schema: JOB_SCHEMA.into(),
            job: std::borrow::Cow::Borrowed(job),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jobs<R: BufRead>(input: R) -> Result<Vec<JobSpec>> {
    let mut jobs = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jobs>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JobLine = serde_json::from_str(&line)?;
        if rec.schema != JOB_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "line {}: unsupported schema {}",
                n + 1,
                rec.schema
            )));
        }
        let job = rec.job.into_owned();
        job.validate()?;
        jobs.push(job);
    }
    Ok(jobs)
}
