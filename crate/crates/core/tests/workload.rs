mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use scalebench::config::{ClusterConfig, WorkloadConfig};
use scalebench::workload::{
    derive_seed, read_jobs, registry, validate_split, write_jobs, ClassId, DependencyKind,
    DistributionRole, Generator, JobSpec, SkewLevel, Subclass,
};

fn generator() -> Generator {
    let mut wl = WorkloadConfig::default();
    for s in registry() {
        wl.sla_medians.insert(s.id(), 600.0);
    }
    Generator::new(&wl, &ClusterConfig::default()).unwrap()
}

fn max_share(job: &JobSpec) -> f64 {
    job.stages
        .iter()
        .flat_map(|s| s.task_skew_shares.iter().copied())
        .fold(0.0, f64::max)
}

fn mean_max_share(g: &Generator, sub: &Subclass, seeds: u64) -> f64 {
    let total: f64 = (0..seeds)
        .map(|seed| max_share(&g.generate_job(sub, derive_seed(77, seed), 0.0).unwrap()))
        .sum();
    total / seeds as f64
}

#[test]
fn same_seed_same_bytes() {
    let g = generator();
    for i in 0..100u64 {
        let sub = registry()[(i % 12) as usize];
        let seed = derive_seed(2024, i);
        let a = g.generate_job(&sub, seed, 0.0).unwrap();
        let b = g.generate_job(&sub, seed, 0.0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn shuffle_heavy_ratio_band() {
    let g = generator();
    let sub = registry()[0];
    assert_eq!(sub.base, ClassId::ShuffleHeavyEtl);
    let jobs = g.generate_workload(&sub, 200, 9).unwrap();
    let inside = jobs
        .iter()
        .filter(|j| (2.0..=3.0).contains(&j.shuffle_ratio()))
        .count();
    assert!(inside * 100 >= 95 * jobs.len(), "{inside}/200 inside [2, 3]");
}

#[test]
fn every_class_stays_in_its_ratio_band() {
    let g = generator();
    for sub in registry() {
        let (lo, hi) = g.class(sub.base).shuffle_to_input_ratio_range;
        for j in g.generate_workload(&sub, 50, 3).unwrap() {
            let r = j.shuffle_ratio();
            assert!(r >= lo - 1e-6 && r <= hi + 1e-6, "{}: ratio {r} outside [{lo}, {hi}]", sub.id());
        }
    }
}

#[test]
fn skewed_join_has_the_heaviest_keys() {
    let g = generator();
    let join = registry()
        .into_iter()
        .find(|s| s.base == ClassId::SkewedMultiWayJoin && s.skew_level == SkewLevel::High)
        .unwrap();
    let heavy = mean_max_share(&g, &join, 200);
    for sub in registry().iter().filter(|s| s.skew_level == SkewLevel::Low) {
        let light = mean_max_share(&g, sub, 200);
        assert!(heavy > light, "{}: {light} >= {heavy}", sub.id());
    }
}

#[test]
fn generated_dags_are_well_formed() {
    let g = generator();
    for sub in registry() {
        for job in g.generate_workload(&sub, 20, 11).unwrap() {
            job.validate().unwrap();
            for (i, s) in job.stages.iter().enumerate() {
                assert_eq!(s.stage_id as usize, i);
                assert!(s.parent_ids.iter().all(|&p| p < s.stage_id));
                assert_eq!(s.task_skew_shares.len(), s.task_count as usize);
                assert!(s.task_skew_shares.iter().all(|&x| x > 0.0));
                let sum: f64 = s.task_skew_shares.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                if s.is_source() {
                    assert_eq!(s.dependency_kind, DependencyKind::Narrow);
                    assert!(s.input_bytes > 0);
                }
            }
            assert_eq!(job.sla_deadline, 1200.0);
        }
    }
}

#[test]
fn submit_times_are_ordered_and_bursty_class_is_bursty() {
    let g = generator();
    for sub in registry() {
        let jobs = g.generate_workload(&sub, 60, 4).unwrap();
        assert_eq!(jobs[0].submit_time, 0.0);
        assert!(jobs.windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        if sub.base == ClassId::BurstySlaReporting {
            let gaps: Vec<f64> = jobs.windows(2).map(|w| w[1].submit_time - w[0].submit_time).collect();
            let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let var = gaps.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (gaps.len() - 1) as f64;
            assert!(var.sqrt() / m > 1.0);
        }
    }
}

#[test]
fn job_files_round_trip() {
    let g = generator();
    let jobs = g.generate_workload(&registry()[5], 10, 1).unwrap();
    let mut buf = Vec::new();
    write_jobs(&mut buf, &jobs).unwrap();
    assert_eq!(read_jobs(buf.as_slice()).unwrap(), jobs);
}

#[test]
fn unknown_role_is_rejected() {
    let g = generator();
    let mut sub = registry()[0];
    sub.distribution_role = DistributionRole::HeldOut;
    assert!(g.generate_job(&sub, 1, 0.0).is_err());
    assert!(g.generate_job(&registry()[0], 1, -1.0).is_err());
}

#[test]
fn shipped_split_is_valid() {
    assert!(validate_split(&registry()).unwrap());
    let ids: BTreeSet<_> = registry().iter().map(|s| s.id()).collect();
    assert_eq!(ids.len(), 12);
}

#[test]
fn every_mutated_split_fails() {
    for s in common::mutated_splits() {
        assert!(!validate_split(&s).unwrap());
    }
}

#[test]
fn duplicate_subclasses_are_an_error() {
    let mut s = registry().to_vec();
    s[1] = s[0];
    assert!(validate_split(&s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shares_follow_generation_invariants(seed in any::<u64>(), idx in 0usize..12) {
        let g = generator();
        let job = g.generate_job(&registry()[idx], seed, 0.0).unwrap();
        prop_assert!(job.validate().is_ok());
        for s in &job.stages {
            // Zipf shares are non-increasing in rank.
            prop_assert!(s.task_skew_shares.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
