use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    zipf_shares, ClassId, DependencyKind, JobSpec, ScaleLevel, StageSpec, Subclass, SubclassId,
    Template,
};
use crate::config::{ArrivalPattern, ClusterConfig, WorkloadClass, WorkloadConfig};
use crate::error::{Error, Result};
use crate::sim::{self, SimConfig};

const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-item seed from a master seed and an index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn log_interp(lo: f64, hi: f64, u: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

struct Draft {
    parents: Vec<u32>,
    kind: DependencyKind,
    tasks: u32,
    /// Share of the job input read by a source stage; zero otherwise.
    source_weight: f64,
}

impl Draft {
    fn source(tasks: u32, weight: f64) -> Self {
        Self {
            parents: Vec::new(),
            kind: DependencyKind::Narrow,
            tasks,
            source_weight: weight,
        }
    }

    fn child(parents: Vec<u32>, kind: DependencyKind, tasks: u32) -> Self {
        Self {
            parents,
            kind,
            tasks,
            source_weight: 0.0,
        }
    }
}

/// Seeded generator of jobs and workloads.
///
/// Generation is a pure function of the configuration, the subclass and the
/// seed. SLA deadlines need the calibrated median runtime of each subclass;
/// medians missing from the configuration are computed on first use by
/// simulating calibration jobs on an effectively unbounded cluster.
pub struct Generator {
    workload: WorkloadConfig,
    cluster: ClusterConfig,
    medians: [OnceLock<f64>; 12],
}

impl Generator {
    pub fn new(workload: &WorkloadConfig, cluster: &ClusterConfig) -> Result<Self> {
        workload.validate()?;
        cluster.validate()?;
        Ok(Self {
            workload: workload.clone(),
            cluster: cluster.clone(),
            medians: Default::default(),
        })
    }

    pub fn workload_config(&self) -> &WorkloadConfig {
        &self.workload
    }

    pub fn class(&self, id: ClassId) -> WorkloadClass {
        self.workload.class(id)
    }

    /// Median runtime of the subclass's calibration jobs with no capacity
    /// limit.
    pub fn sla_median(&self, id: SubclassId) -> Result<f64> {
        let sub = id.registered()?;
        if let Some(&m) = self.workload.sla_medians.get(&id) {
            return Ok(m);
        }
        let ordinal = id.ordinal().expect("registered subclass has an ordinal");
        Ok(*self.medians[ordinal].get_or_init(|| self.calibrate_median(&sub)))
    }

    /// Runtimes of the calibration jobs for one subclass, in job order.
    pub fn calibration_runtimes(&self, sub: &Subclass) -> Vec<f64> {
        let sim_cfg = SimConfig::unconstrained(
            &self.cluster,
            self.workload.calibration_executors,
            self.workload.straggler_coefficient,
        );
        (0..self.workload.calibration_jobs as u64)
            .map(|i| {
                let seed = derive_seed(self.workload.calibration_seed, i);
                let job = self.build(sub, seed, 0.0, f64::MAX);
                sim::static_makespan(std::slice::from_ref(&job), &sim_cfg)
            })
            .collect()
    }

    fn calibrate_median(&self, sub: &Subclass) -> f64 {
        let mut runtimes = self.calibration_runtimes(sub);
        runtimes.sort_by(f64::total_cmp);
        let n = runtimes.len();
        if n % 2 == 1 {
            runtimes[n / 2]
        } else {
            0.5 * (runtimes[n / 2 - 1] + runtimes[n / 2])
        }
    }

    pub fn generate_job(&self, subclass: &Subclass, seed: u64, submit_time: f64) -> Result<JobSpec> {
        let registered = subclass.id().registered()?;
        if registered != *subclass {
            return Err(Error::Config(format!(
                "subclass {} does not match the registered role",
                subclass.id()
            )));
        }
        if !submit_time.is_finite() || submit_time < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "submit_time must be finite and non-negative, got {submit_time}"
            )));
        }
        let deadline = self.workload.sla_multiplier * self.sla_median(subclass.id())?;
        Ok(self.build(subclass, seed, submit_time, deadline))
    }

    /// Emits `job_count` jobs with non-decreasing submit times starting at 0.
    pub fn generate_workload(
        &self,
        subclass: &Subclass,
        job_count: usize,
        seed: u64,
    ) -> Result<Vec<JobSpec>> {
        if job_count == 0 {
            return Err(Error::InvalidParameter("job_count must be >= 1".into()));
        }
        let class = self.workload.class(subclass.base);
        let mut arrivals = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
        let mut t = 0.0;
        let mut jobs = Vec::with_capacity(job_count);
        for i in 0..job_count {
            if i > 0 {
                t = round_ms(t + draw_gap(&mut arrivals, &class.arrival));
            }
            jobs.push(self.generate_job(subclass, derive_seed(seed, i as u64), t)?);
        }
        Ok(jobs)
    }

    fn build(&self, sub: &Subclass, seed: u64, submit_time: f64, deadline: f64) -> JobSpec {
        let class = self.workload.class(sub.base);
        let ordinal = sub.id().ordinal().unwrap_or(0) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ordinal));

        let (input_range, part_range) = match sub.scale_level {
            ScaleLevel::Small => (self.workload.small_input_gib, self.workload.small_partitions),
            ScaleLevel::Large => (self.workload.large_input_gib, self.workload.large_partitions),
        };
        // Partition count tracks input size: both sit at the same position
        // of their log ranges.
        let u: f64 = rng.gen();
        let total_input = (log_interp(input_range.0, input_range.1, u) * GIB).round() as u64;
        let partitions = log_interp(f64::from(part_range.0), f64::from(part_range.1), u)
            .round()
            .clamp(f64::from(part_range.0), f64::from(part_range.1)) as u32;

        let drafts = build_template(&class, partitions, &mut rng);
        let n = drafts.len();

        // Writers are stages with at least one wide child.
        let writer: Vec<bool> = (0..n as u32)
            .map(|id| {
                drafts
                    .iter()
                    .any(|d| d.kind == DependencyKind::Wide && d.parents.contains(&id))
            })
            .collect();

        let source_total: f64 = drafts.iter().map(|d| d.source_weight).sum();
        let mut input = vec![0u64; n];
        let sources: Vec<usize> = (0..n).filter(|&i| drafts[i].parents.is_empty()).collect();
        let mut assigned = 0u64;
        for (k, &i) in sources.iter().enumerate() {
            input[i] = if k + 1 == sources.len() {
                total_input - assigned
            } else {
                ((total_input as f64 * drafts[i].source_weight / source_total).round() as u64).max(1)
            };
            assigned += input[i];
        }

        let (lo, hi) = class.shuffle_to_input_ratio_range;
        let ratio = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let writers: Vec<usize> = (0..n).filter(|&i| writer[i]).collect();
        let mut shuffle = vec![0u64; n];
        if !writers.is_empty() {
            let min_total = (lo * total_input as f64).ceil();
            let max_total = (hi * total_input as f64).floor();
            let total = (ratio * total_input as f64).round().clamp(min_total, max_total) as u64;
            let weights: Vec<f64> = writers.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
            let wsum: f64 = weights.iter().sum();
            let mut left = total;
            for (k, &i) in writers.iter().enumerate() {
                shuffle[i] = if k + 1 == writers.len() {
                    left
                } else {
                    ((total as f64 * weights[k] / wsum).floor() as u64).min(left)
                };
                left -= shuffle[i];
            }
        }

        for i in 0..n {
            if drafts[i].parents.is_empty() {
                continue;
            }
            input[i] = drafts[i]
                .parents
                .iter()
                .map(|&p| match drafts[i].kind {
                    DependencyKind::Wide => shuffle[p as usize],
                    _ => input[p as usize],
                })
                .sum();
        }

        let exponent = class.exponent_for(sub.skew_level);
        let stages = drafts
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let per_task = input[i] as f64 / f64::from(d.tasks);
                let base = round_ms(
                    (per_task / self.workload.slot_throughput).max(self.workload.min_task_duration),
                );
                StageSpec {
                    stage_id: i as u32,
                    parent_ids: d.parents,
                    task_count: d.tasks,
                    task_base_duration: base,
                    task_skew_shares: zipf_shares(d.tasks as usize, exponent)
                        .expect("task count and exponent validated"),
                    input_bytes: input[i],
                    shuffle_write_bytes: shuffle[i],
                    dependency_kind: d.kind,
                }
            })
            .collect();

        JobSpec {
            job_id: format!("{}-{seed:016x}", sub.id()),
            subclass: *sub,
            seed,
            stages,
            submit_time,
            sla_deadline: deadline,
        }
    }
}

fn draw_gap(rng: &mut ChaCha8Rng, pattern: &ArrivalPattern) -> f64 {
    let exp = |rng: &mut ChaCha8Rng, mean: f64| -mean * (1.0 - rng.gen::<f64>()).ln();
    match *pattern {
        ArrivalPattern::Poisson { mean_gap } => exp(rng, mean_gap),
        ArrivalPattern::Periodic { period, jitter } => {
            if jitter > 0.0 {
                period * (1.0 + rng.gen_range(-jitter..=jitter))
            } else {
                period
            }
        }
        ArrivalPattern::Bursty {
            burst_prob,
            burst_gap,
            quiet_gap,
        } => {
            if rng.gen::<f64>() < burst_prob {
                exp(rng, burst_gap)
            } else {
                exp(rng, quiet_gap)
            }
        }
    }
    .max(0.0)
}

fn stage_count(rng: &mut ChaCha8Rng, range: (u32, u32)) -> u32 {
    rng.gen_range(range.0..=range.1)
}

fn build_template(class: &WorkloadClass, p: u32, rng: &mut ChaCha8Rng) -> Vec<Draft> {
    use DependencyKind::*;
    let mut d = Vec::new();
    match class.structural_template {
        Template::LinearWide => {
            let n = stage_count(rng, class.stage_count_range);
            d.push(Draft::source(p, 1.0));
            for i in 1..n {
                d.push(Draft::child(vec![i - 1], Wide, p));
            }
        }
        Template::JoinTree => {
            let n = stage_count(rng, class.stage_count_range);
            // Three- or four-way left-deep join; extra stages aggregate the result.
            let ways: u32 = if n < 7 { 3 } else { rng.gen_range(3..=4) };
            for _ in 0..ways {
                let w = rng.gen_range(0.5..1.5);
                d.push(Draft::source(p, w));
            }
            let mut left = 0u32;
            for right in 1..ways {
                d.push(Draft::child(vec![left, right], Wide, p));
                left = d.len() as u32 - 1;
            }
            while (d.len() as u32) < n {
                let prev = d.len() as u32 - 1;
                d.push(Draft::child(vec![prev], Wide, p));
            }
        }
        Template::IterativeLoop => {
            let (lo, hi) = class.iterations.unwrap_or((4, 8));
            let iterations = rng.gen_range(lo..=hi);
            for it in 0..iterations {
                let a = d.len() as u32;
                if it == 0 {
                    d.push(Draft::source(p, 1.0));
                } else {
                    d.push(Draft::child(vec![a - 1], Narrow, p));
                }
                d.push(Draft::child(vec![a], Wide, p));
                d.push(Draft::child(vec![a + 1], Narrow, p));
            }
        }
        Template::WindowAgg => {
            let n = stage_count(rng, class.stage_count_range).max(3);
            d.push(Draft::source(p, 1.0));
            d.push(Draft::child(vec![0], Wide, p));
            d.push(Draft::child(vec![1], Wide, p));
            for i in 3..n {
                d.push(Draft::child(vec![i - 1], Narrow, p));
            }
        }
        Template::BroadcastJoin => {
            let n = stage_count(rng, class.stage_count_range).clamp(3, 4);
            let dim_weight = rng.gen_range(0.005..0.02);
            d.push(Draft::source((p / 8).max(4), dim_weight));
            d.push(Draft::source(p, 1.0 - dim_weight));
            d.push(Draft::child(vec![0, 1], Broadcast, p));
            if n == 4 {
                d.push(Draft::child(vec![2], Wide, p));
            }
        }
        Template::BurstyBatch => {
            let n = stage_count(rng, class.stage_count_range);
            d.push(Draft::source(p, 1.0));
            for i in 1..n {
                let kind = if i % 2 == 1 { Wide } else { Narrow };
                d.push(Draft::child(vec![i - 1], kind, p));
            }
        }
    }
    d
}
