use scalebench::config::{Config, PolicyDescriptor};
use scalebench::harness::{report_from_dir, run_plan, CacheStatus, RunOptions};

fn smoke() -> Config {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml")).unwrap();
    Config::from_toml_str(&text).unwrap()
}

fn opts(dir: &std::path::Path, stamp: &str) -> RunOptions {
    RunOptions {
        output_dir: Some(dir.to_path_buf()),
        stamp: Some(stamp.into()),
        store: None,
    }
}

#[test]
fn smoke_plan_is_reproducible_and_rebuildable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let a = run_plan(&cfg, &opts(tmp.path(), "a")).unwrap();
    let b = run_plan(&cfg, &opts(tmp.path(), "b")).unwrap();
    assert_eq!(a.calibration, CacheStatus::Miss);
    assert_eq!(b.calibration, CacheStatus::Hit);

    let (ra, rb) = (a.report.without_timestamp(), b.report.without_timestamp());
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());

    let r = &a.report;
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.cells.len(), 3 * 2 * 5);
    assert_eq!(r.holm_family_size, 3);
    assert_eq!(r.comparisons.len(), 3);
    assert!(r.comparisons.iter().all(|c| c.pairs == 10));
    assert_eq!(r.aggregates.len(), 3);

    let rebuilt = report_from_dir(&a.dir).unwrap();
    assert_eq!(
        serde_json::to_string(&rebuilt.without_timestamp()).unwrap(),
        serde_json::to_string(&ra).unwrap()
    );
    for f in ["report.json", "metrics.ndjson", "summary.txt", "config.toml", "calibration.json"] {
        assert!(a.dir.join(f).exists(), "{f}");
    }
}

#[test]
fn holm_family_grows_with_policies() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke();
    cfg.plan.subclasses.truncate(1);
    cfg.plan.seeds.truncate(2);
    cfg.plan.jobs_per_cell = 2;
    cfg.plan.policies.push(PolicyDescriptor::Builtin("reactive:1.5".into()));
    let out = run_plan(&cfg, &opts(tmp.path(), "x")).unwrap();
    assert_eq!(out.report.holm_family_size, 6);
    assert_eq!(out.report.comparisons.len(), 6);
}

#[test]
fn a_crashing_policy_fails_only_its_own_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke();
    cfg.plan.subclasses.truncate(1);
    cfg.plan.seeds.truncate(2);
    cfg.plan.jobs_per_cell = 2;
    cfg.plan.policies.push(PolicyDescriptor::External {
        name: "crashy".into(),
        command: vec![
            env!("CARGO_BIN_EXE_scalebench").into(),
            "stub-policy".into(),
            "--mode".into(),
            "crash".into(),
            "--after".into(),
            "1".into(),
        ],
    });
    let out = run_plan(&cfg, &opts(tmp.path(), "c")).unwrap();
    let r = &out.report;
    assert_eq!(r.failures.len(), 2);
    assert!(r.failures.iter().all(|f| f.policy == "crashy"));
    assert_eq!(r.cells.len(), 3 * 2);
    assert!(out.dir.join("runs").read_dir().unwrap().any(|e| {
        e.unwrap().file_name().to_string_lossy().ends_with(".partial.ndjson")
    }));
}

#[test]
fn unknown_policy_names_fail_the_cell_not_the_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke();
    cfg.plan.subclasses.truncate(1);
    cfg.plan.seeds.truncate(1);
    cfg.plan.jobs_per_cell = 1;
    cfg.plan.policies.push(PolicyDescriptor::Builtin("psychic".into()));
    let out = run_plan(&cfg, &opts(tmp.path(), "u")).unwrap();
    assert_eq!(out.report.failures.len(), 1);
    assert!(out.report.failures[0].error.contains("psychic"));
}
