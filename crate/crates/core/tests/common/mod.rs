//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Each one is deliberately naive.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalebench::config::{ClusterConfig, PolicyConfig};
use scalebench::sim::SimConfig;
use scalebench::workload::{
    registry, zipf_shares, DependencyKind, DistributionRole, JobSpec, StageSpec, Subclass,
};

// ---------------------------------------------------------------- KS / EMD

/// Empirical CDF of `xs` at `x`, by counting.
fn ecdf(xs: &[f64], x: f64) -> f64 {
    xs.iter().filter(|v| **v <= x).count() as f64 / xs.len() as f64
}

/// sup |F_a − F_b| evaluated at every observed point.
pub fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

/// Minimum-cost transport between two mass vectors sitting at `points`,
/// ground cost |x_i − x_j|, solved as a min-cost flow with successive
/// Bellman–Ford shortest paths.
pub fn transport_oracle(points: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let n = points.len();
    // Nodes: 0 source, 1..=n supply, n+1..=2n demand, 2n+1 sink.
    let nodes = 2 * n + 2;
    let (src, sink) = (0, 2 * n + 1);
    struct Arc {
        to: usize,
        cap: f64,
        cost: f64,
    }
    let mut arcs: Vec<Arc> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let add = |arcs: &mut Vec<Arc>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: f64, cost: f64| {
        adj[u].push(arcs.len());
        arcs.push(Arc { to: v, cap, cost });
        adj[v].push(arcs.len());
        arcs.push(Arc { to: u, cap: 0.0, cost: -cost });
    };
    for i in 0..n {
        add(&mut arcs, &mut adj, src, 1 + i, a[i], 0.0);
        add(&mut arcs, &mut adj, 1 + n + i, sink, b[i], 0.0);
        for j in 0..n {
            add(&mut arcs, &mut adj, 1 + i, 1 + n + j, f64::INFINITY, (points[i] - points[j]).abs());
        }
    }
    let eps = 1e-15;
    let mut total = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via: Vec<Option<usize>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let arc = &arcs[e];
                    if arc.cap > eps && dist[u] + arc.cost < dist[arc.to] - 1e-15 {
                        dist[arc.to] = dist[u] + arc.cost;
                        via[arc.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while let Some(e) = via[v] {
            push = push.min(arcs[e].cap);
            v = arcs[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = via[v] {
            arcs[e].cap -= push;
            arcs[e ^ 1].cap += push;
            v = arcs[e ^ 1].to;
        }
        total += push * dist[sink];
    }
    total
}

// ---------------------------------------------------------------- Wilcoxon

/// Mid-ranks of |d| among the non-zero differences, by pairwise counting.
fn midranks(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|x| {
            let less = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// (W+, W−, two-sided p) by enumerating all 2^n sign patterns.
pub fn wilcoxon_enumeration(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return (0.0, 0.0, 1.0);
    }
    let ranks = midranks(&d);
    let total: f64 = ranks.iter().sum();
    let plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let w = plus.min(total - plus);
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= w + 1e-9 {
            extreme += 1;
        }
    }
    (plus, total - plus, (extreme as f64 / (1u64 << n) as f64).min(1.0))
}

// ---------------------------------------------------------------- BCa

/// Normal CDF from the Maclaurin series of erf; accurate to about 1e-14 for |x| ≤ 3.
pub fn phi(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -z * z / k;
        let add = term / (2.0 * k + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    0.5 + sum / std::f64::consts::PI.sqrt()
}

/// Inverse of [`phi`] by bisection.
pub fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-8.0, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (h - h.floor()) * (sorted[i + 1] - sorted[i])
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Textbook BCa interval for the mean, drawing resample indices from the
/// same ChaCha8 stream as the library (b outer, i inner).
pub fn bca_oracle(values: &[f64], b: usize, alpha: f64, seed: u64) -> (f64, f64) {
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps: Vec<f64> = (0..b)
        .map(|_| {
            let s: Vec<f64> = (0..n).map(|_| values[rng.gen_range(0..n)]).collect();
            mean(&s)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let theta = mean(values);
    let below = reps.iter().filter(|r| **r < theta).count() as f64;
    let z0 = phi_inv(below / b as f64);
    let jack: Vec<f64> = (0..n)
        .map(|i| {
            let rest: Vec<f64> = values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            mean(&rest)
        })
        .collect();
    let jm = mean(&jack);
    let num: f64 = jack.iter().map(|j| (jm - j).powi(3)).sum();
    let den: f64 = jack.iter().map(|j| (jm - j).powi(2)).sum();
    let a = num / (6.0 * den.powf(1.5));
    let level = |q: f64| {
        let z = phi_inv(q);
        phi(z0 + (z0 + z) / (1.0 - a * (z0 + z)))
    };
    (type7(&reps, level(alpha / 2.0)), type7(&reps, level(1.0 - alpha / 2.0)))
}

// ---------------------------------------------------------------- scheduler

/// Makespan (time the last job finishes) and vcpu-seconds of `jobs` on a
/// fixed pool of `cfg.cluster.max_executors`, replayed by a time-stepped
/// list scheduler: at each instant, settle every arrival, completion and
/// delayed stage release, then hand free slots to the lowest (job, stage)
/// with tasks left.
pub fn reference_static_run(jobs: &[JobSpec], cfg: &SimConfig) -> (f64, f64) {
    let c = &cfg.cluster;
    let k = c.max_executors;
    let slots = (k * c.slots_per_executor) as usize;
    let nj = jobs.len();
    let mut next_task: Vec<Vec<u32>> = jobs.iter().map(|j| vec![0; j.stages.len()]).collect();
    let mut done_tasks: Vec<Vec<u32>> = next_task.clone();
    let mut stage_done: Vec<Vec<bool>> = jobs.iter().map(|j| vec![false; j.stages.len()]).collect();
    // Time each stage becomes runnable, once known.
    let mut ready_at: Vec<Vec<Option<f64>>> = jobs.iter().map(|j| vec![None; j.stages.len()]).collect();
    let mut running: Vec<(f64, usize, usize)> = Vec::new();
    let mut job_finish: Vec<Option<f64>> = vec![None; nj];
    for (i, j) in jobs.iter().enumerate() {
        for s in &j.stages {
            if s.parent_ids.is_empty() {
                ready_at[i][s.stage_id as usize] = Some(j.submit_time);
            }
        }
    }
    let read: Vec<Vec<f64>> = jobs
        .iter()
        .map(|j| {
            j.stages
                .iter()
                .map(|s| {
                    if s.dependency_kind == DependencyKind::Wide {
                        s.parent_ids.iter().map(|&p| j.stages[p as usize].shuffle_write_bytes).sum::<u64>() as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let mut t = 0.0_f64;
    loop {
        // Settle completions at t; each may release children at t.
        let mut i = 0;
        while i < running.len() {
            if running[i].0 == t {
                let (_, j, s) = running.swap_remove(i);
                done_tasks[j][s] += 1;
                if done_tasks[j][s] == jobs[j].stages[s].task_count {
                    stage_done[j][s] = true;
                    if stage_done[j].iter().all(|d| *d) {
                        job_finish[j] = Some(t);
                    }
                    for child in &jobs[j].stages {
                        let cid = child.stage_id as usize;
                        if child.parent_ids.contains(&(s as u32))
                            && child.parent_ids.iter().all(|&p| stage_done[j][p as usize])
                        {
                            let delay = if child.dependency_kind == DependencyKind::Broadcast {
                                c.broadcast_latency
                            } else {
                                0.0
                            };
                            ready_at[j][cid] = Some(t + delay);
                        }
                    }
                }
            } else {
                i += 1;
            }
        }
        if job_finish.iter().all(Option::is_some) {
            break;
        }
        // Fill free slots.
        'fill: while running.len() < slots {
            for j in 0..nj {
                for s in 0..jobs[j].stages.len() {
                    let st = &jobs[j].stages[s];
                    if ready_at[j][s].is_some_and(|r| r <= t) && next_task[j][s] < st.task_count {
                        let task = next_task[j][s];
                        next_task[j][s] += 1;
                        let n = f64::from(st.task_count);
                        let share = st.task_skew_shares[task as usize];
                        let mut d = st.task_base_duration * (1.0 + cfg.straggler_coefficient * n * share);
                        if st.dependency_kind == DependencyKind::Wide {
                            let per_task = read[j][s] / n;
                            d *= 1.0 + per_task / (c.shuffle_bandwidth * f64::from(k));
                        }
                        running.push((t + d, j, s));
                        continue 'fill;
                    }
                }
            }
            break;
        }
        // Advance to the next instant anything can happen.
        let next = running
            .iter()
            .map(|r| r.0)
            .chain(ready_at.iter().flatten().flatten().copied().filter(|r| *r > t))
            .fold(f64::INFINITY, f64::min);
        assert!(next.is_finite(), "reference scheduler stalled at {t}");
        t = next;
    }
    let end = job_finish.iter().map(|f| f.unwrap()).fold(0.0, f64::max);
    (end, f64::from(k) * f64::from(c.vcpus_per_executor) * end)
}

/// A small random workload exercising narrow, wide and broadcast edges.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<JobSpec>, SimConfig) {
    let jobs = (0..rng.gen_range(1..=3))
        .map(|i| {
            let n_stages = rng.gen_range(1..=4u32);
            let mut stages: Vec<StageSpec> = (0..n_stages)
                .map(|s| {
                    let tasks = rng.gen_range(1..=6u32);
                    let mut parents = Vec::new();
                    if s > 0 {
                        parents.push(s - 1);
                        if s > 1 && rng.gen_bool(0.4) {
                            parents.insert(0, rng.gen_range(0..s - 1));
                        }
                    }
                    let kind = if s == 0 {
                        DependencyKind::Narrow
                    } else {
                        [DependencyKind::Narrow, DependencyKind::Wide, DependencyKind::Broadcast][rng.gen_range(0..3)]
                    };
                    StageSpec {
                        stage_id: s,
                        parent_ids: parents,
                        task_count: tasks,
                        // Quarter seconds keep every event time exact.
                        task_base_duration: f64::from(rng.gen_range(1..=80u32)) / 4.0,
                        task_skew_shares: zipf_shares(tasks as usize, rng.gen_range(0.2..1.6)).unwrap(),
                        input_bytes: 1 << 20,
                        shuffle_write_bytes: 0,
                        dependency_kind: kind,
                    }
                })
                .collect();
            for s in 0..stages.len() {
                let feeds_wide = stages.iter().any(|c| {
                    c.dependency_kind == DependencyKind::Wide && c.parent_ids.contains(&(s as u32))
                });
                if feeds_wide {
                    stages[s].shuffle_write_bytes = rng.gen_range(1..=400) * 1_000_000;
                }
            }
            JobSpec {
                job_id: format!("j{i}"),
                subclass: registry()[0],
                seed: i,
                stages,
                submit_time: f64::from(rng.gen_range(0..120u32)),
                sla_deadline: 1000.0,
            }
        })
        .collect();
    let k = rng.gen_range(1..=4);
    let cluster = ClusterConfig {
        min_executors: k,
        max_executors: k,
        initial_executors: k,
        slots_per_executor: rng.gen_range(1..=3),
        vcpus_per_executor: rng.gen_range(1..=4),
        shuffle_bandwidth: 50.0e6,
        ..Default::default()
    };
    (jobs, SimConfig::new(cluster, PolicyConfig::default(), 1.0))
}

/// The repository root (two levels above this crate).
pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- split

/// Single-entry role flips and truncations of the shipped split, plus each
/// held-out subclass moved onto its in-distribution sibling's skew level.
pub fn mutated_splits() -> Vec<Vec<Subclass>> {
    let base = registry();
    let mut out = Vec::new();
    for i in 0..12 {
        let mut s = base.to_vec();
        s[i].distribution_role = match s[i].distribution_role {
            DistributionRole::InDistribution => DistributionRole::HeldOut,
            DistributionRole::HeldOut => DistributionRole::InDistribution,
        };
        out.push(s);
        let mut s = base.to_vec();
        s.remove(i);
        out.push(s);
    }
    // Same counts, but a held-out subclass takes its in-distribution
    // sibling's skew level. Scales still differ, so ids stay unique.
    for i in 0..12 {
        if base[i].distribution_role != DistributionRole::HeldOut {
            continue;
        }
        let sib = i ^ 1;
        let mut s = base.to_vec();
        s[i].skew_level = s[sib].skew_level;
        out.push(s);
    }
    out
}
