use scalebench::config::{ClusterConfig, PolicyConfig, WorkloadConfig};
use scalebench::metrics::{
    consistency, cost, metric_record, responsiveness, sla_attainment, target_changes, thrash,
};
use scalebench::policy::{ReactivePolicy, StaticPolicy};
use scalebench::sim::{integrate_levels, simulate, ExecutorLevel, RunRecord, SimConfig};
use scalebench::workload::{registry, Generator, JobSpec};

fn generator() -> Generator {
    let mut wl = WorkloadConfig::default();
    for s in registry() {
        wl.sla_medians.insert(s.id(), 900.0);
    }
    Generator::new(&wl, &ClusterConfig::default()).unwrap()
}

fn sim_cfg() -> SimConfig {
    SimConfig::new(ClusterConfig::default(), PolicyConfig::default(), 1.0)
}

fn workload(sub: usize, seed: u64) -> Vec<JobSpec> {
    generator().generate_workload(&registry()[sub], 3, seed).unwrap()
}

fn reactive_run(sub: usize, seed: u64) -> RunRecord {
    simulate(&workload(sub, seed), &mut ReactivePolicy::new(1.0), &sim_cfg(), seed).unwrap()
}

#[test]
fn static_policies_never_thrash() {
    for sub in [0, 3, 5, 8, 11] {
        for (seed, n) in [(1, 1), (2, 4), (3, 16)] {
            let r = simulate(&workload(sub, seed), &mut StaticPolicy::new(n), &sim_cfg(), seed).unwrap();
            assert_eq!(target_changes(&r), 0);
            assert_eq!(thrash(&r).unwrap(), 0.0);
        }
    }
}

#[test]
fn constant_demand_has_no_responsiveness() {
    let mut r = reactive_run(0, 4);
    for t in &mut r.ticks {
        t.demand_slots = 12;
    }
    assert_eq!(responsiveness(&r, 0.5), None);
}

#[test]
fn cost_rectangles() {
    let levels = [
        ExecutorLevel { time: 0.0, executors: 2 },
        ExecutorLevel { time: 100.0, executors: 4 },
        ExecutorLevel { time: 250.0, executors: 1 },
    ];
    // 2·4·100 + 4·4·150 + 1·4·50
    assert_eq!(integrate_levels(&levels, 4, 300.0), 3400.0);
    // Levels after the end are not billed.
    assert_eq!(integrate_levels(&levels, 4, 200.0), 2400.0);

    let mut r = reactive_run(2, 9);
    r.vcpu_seconds = 7200.0;
    r.ledger = None;
    let c = cost(&r, 0.25);
    assert_eq!(c.vcpu_hours, 2.0);
    assert_eq!(c.dollars, 0.5);
    let doubled = cost(&r, 0.5);
    assert_eq!(doubled.dollars, 2.0 * c.dollars);
    assert_eq!(doubled.vcpu_hours, c.vcpu_hours);
}

#[test]
fn finishing_exactly_at_the_deadline_counts_as_met() {
    let mut r = reactive_run(1, 2);
    let n = r.jobs.len();
    for j in &mut r.jobs {
        j.finish_time = j.deadline_at;
    }
    assert_eq!(sla_attainment(&r).unwrap(), 1.0);
    r.jobs[0].finish_time = r.jobs[0].deadline_at + 1e-9;
    assert_eq!(sla_attainment(&r).unwrap(), (n - 1) as f64 / n as f64);
}

#[test]
fn attainment_is_a_fraction_of_jobs() {
    for seed in 0..10 {
        let r = reactive_run(4, seed);
        let a = sla_attainment(&r).unwrap();
        let n = r.jobs.len() as f64;
        assert_eq!((a * n).round() / n, a);
    }
}

#[test]
fn metric_rows_carry_every_field() {
    let r = reactive_run(6, 1);
    let m = metric_record(&r, registry()[6].id(), 0.048, 0.5).unwrap();
    assert_eq!(m.jobs_total, r.jobs.len());
    assert_eq!(m.decision_ticks, r.ticks.len());
    assert_eq!(m.environment, "sim");
    let row = serde_json::to_value(&m).unwrap();
    for key in [
        "policy", "subclass", "environment", "seed", "vcpu_hours", "dollars", "inference_dollars",
        "sla_attainment", "jobs_met", "jobs_total", "responsiveness_median", "thrash",
        "consistency_sigma", "decision_ticks", "faults", "jobs",
    ] {
        assert!(row.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn identical_seeds_are_perfectly_consistent() {
    let a = reactive_run(0, 5).targets();
    assert_eq!(consistency(&[a.clone(), a.clone(), a]).unwrap(), 0.0);
    assert_eq!(consistency(&[vec![1, 3], vec![3, 1]]).unwrap(), 1.0);
    assert!(consistency(&[vec![1]]).is_err());
}
