use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{PlanConfig, RatioDenominator};
use crate::error::Result;
use crate::metrics::{self, consistency, MetricRecord};
use crate::sim::RunRecord;
use crate::stats::{
    bootstrap_bca, holm_adjusted, holm_bonferroni, median, wilcoxon_signed_rank, IntervalMethod,
    PairedSample, WilcoxonMethod,
};
use crate::workload::{derive_seed, DistributionRole, SubclassId};

use super::OracleCell;

pub const REPORT_SCHEMA: &str = "scalebench.report/1";

/// Seed for the bootstrap of comparison `i`.
const BOOTSTRAP_SEED: u64 = 0xb007_57a9;

/// Outcome of one (policy, subclass, seed) cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub policy: String,
    pub subclass: SubclassId,
    pub seed: u64,
    pub result: std::result::Result<RunRecord, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: String,
    pub subclass: SubclassId,
    pub seed: u64,
    pub role: DistributionRole,
    /// Dollars over the denominator's dollars on the same workload.
    pub cost_ratio: Option<f64>,
    /// No static count met every deadline on this workload, so the oracle
    /// reference is the maximum cluster.
    pub oracle_infeasible: Option<bool>,
    pub metrics: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub policy: String,
    pub subclass: SubclassId,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub cells: usize,
    pub failures: usize,
    pub mean_dollars: Option<f64>,
    pub mean_sla_attainment: Option<f64>,
    pub in_distribution_mean_ratio: Option<f64>,
    pub held_out_mean_ratio: Option<f64>,
    /// Held-out minus in-distribution mean cost ratio.
    pub generalization_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioInterval {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub method: IntervalMethod,
}

/// Paired comparison of two policies over the cells both completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub policy_a: String,
    pub policy_b: String,
    pub pairs: usize,
    pub wilcoxon_w: f64,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    /// BCa interval on the median of per-pair dollar ratios a/b.
    pub median_cost_ratio: Option<RatioInterval>,
    pub holm_adjusted_p: f64,
    pub holm_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub generated_at: String,
    pub calibration_key: String,
    pub environment: String,
    pub ratio_denominator: String,
    pub alpha: f64,
    pub policies: Vec<String>,
    pub subclasses: Vec<SubclassId>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub aggregates: Vec<PolicyAggregate>,
    pub holm_family_size: usize,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    /// Copy with the timestamp cleared, for reproducibility checks.
    pub fn without_timestamp(&self) -> Self {
        let mut r = self.clone();
        r.generated_at.clear();
        r
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Assembles metrics, ratios and comparisons from finished cells.
/// `oracle` holds the static-optimal reference of each cell workload.
pub fn build_report(
    plan: &PlanConfig,
    rate_per_vcpu_hour: f64,
    calibration_key: &str,
    cells: &[CellRun],
    oracle: &[OracleCell],
    generated_at: String,
) -> Result<ExperimentReport> {
    let policies: Vec<String> = plan.policies.iter().map(|p| p.name().to_string()).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for cell in cells {
        let fail = |error: String| CellFailure {
            policy: cell.policy.clone(),
            subclass: cell.subclass,
            seed: cell.seed,
            error,
        };
        match &cell.result {
            Ok(record) => match metrics::metric_record(
                record,
                cell.subclass,
                rate_per_vcpu_hour,
                plan.responsiveness_threshold,
            ) {
                Ok(mut m) => {
                    m.policy = cell.policy.clone();
                    results.push((cell, m));
                }
                Err(e) => failures.push(fail(e.to_string())),
            },
            Err(e) => failures.push(fail(e.clone())),
        }
    }

    // Consistency across seeds for each (policy, subclass).
    let mut targets: BTreeMap<(String, SubclassId), Vec<Vec<u32>>> = BTreeMap::new();
    for (cell, _) in &results {
        if let Ok(r) = &cell.result {
            targets
                .entry((cell.policy.clone(), cell.subclass))
                .or_default()
                .push(r.targets());
        }
    }
    let sigma: BTreeMap<(String, SubclassId), f64> = targets
        .into_iter()
        .filter_map(|(k, seqs)| consistency(&seqs).ok().map(|s| (k, s)))
        .collect();

    let oracle: BTreeMap<(SubclassId, u64), &OracleCell> =
        oracle.iter().map(|o| ((o.subclass, o.seed), o)).collect();
    let dollars: BTreeMap<(String, SubclassId, u64), f64> = results
        .iter()
        .map(|(c, m)| ((c.policy.clone(), c.subclass, c.seed), m.dollars))
        .collect();
    let denominator = |sub: SubclassId, seed: u64| -> Option<f64> {
        match &plan.ratio_denominator {
            RatioDenominator::Oracle => oracle.get(&(sub, seed)).map(|o| o.dollars),
            RatioDenominator::Policy(p) => dollars.get(&(p.clone(), sub, seed)).copied(),
        }
    };

    let mut out_cells = Vec::new();
    for (cell, mut m) in results {
        m.consistency_sigma = sigma.get(&(cell.policy.clone(), cell.subclass)).copied();
        let role = cell.subclass.registered()?.distribution_role;
        let cost_ratio = denominator(cell.subclass, cell.seed)
            .filter(|d| *d > 0.0)
            .map(|d| m.dollars / d);
        out_cells.push(CellResult {
            policy: cell.policy.clone(),
            subclass: cell.subclass,
            seed: cell.seed,
            role,
            cost_ratio,
            oracle_infeasible: oracle.get(&(cell.subclass, cell.seed)).map(|o| o.infeasible),
            metrics: m,
        });
    }

    let aggregates = policies
        .iter()
        .map(|p| {
            let mine: Vec<&CellResult> = out_cells.iter().filter(|c| &c.policy == p).collect();
            let ratios = |role: DistributionRole| -> Vec<f64> {
                mine.iter()
                    .filter(|c| c.role == role)
                    .filter_map(|c| c.cost_ratio)
                    .collect()
            };
            let ind = mean(&ratios(DistributionRole::InDistribution));
            let held = mean(&ratios(DistributionRole::HeldOut));
            PolicyAggregate {
                policy: p.clone(),
                cells: mine.len(),
                failures: failures.iter().filter(|f| &f.policy == p).count(),
                mean_dollars: mean(&mine.iter().map(|c| c.metrics.dollars).collect::<Vec<_>>()),
                mean_sla_attainment: mean(
                    &mine.iter().map(|c| c.metrics.sla_attainment).collect::<Vec<_>>(),
                ),
                in_distribution_mean_ratio: ind,
                held_out_mean_ratio: held,
                generalization_gap: ind.zip(held).map(|(i, h)| h - i),
            }
        })
        .collect();

    let comparisons = compare(plan, &policies, &out_cells)?;
    Ok(ExperimentReport {
        schema: REPORT_SCHEMA.into(),
        generated_at,
        calibration_key: calibration_key.into(),
        environment: metrics::DEFAULT_ENVIRONMENT.into(),
        ratio_denominator: match &plan.ratio_denominator {
            RatioDenominator::Oracle => "oracle".into(),
            RatioDenominator::Policy(p) => p.clone(),
        },
        alpha: plan.alpha,
        policies,
        subclasses: plan.subclasses.clone(),
        seeds: plan.seeds.clone(),
        cells: out_cells,
        failures,
        aggregates,
        holm_family_size: comparisons.len(),
        comparisons,
    })
}

fn compare(plan: &PlanConfig, policies: &[String], cells: &[CellResult]) -> Result<Vec<Comparison>> {
    let index: BTreeMap<(&str, SubclassId, u64), &CellResult> = cells
        .iter()
        .map(|c| ((c.policy.as_str(), c.subclass, c.seed), c))
        .collect();
    let mut out = Vec::new();
    for (i, a) in policies.iter().enumerate() {
        for b in &policies[i + 1..] {
            let mut ratio_pairs = Vec::new();
            let mut cost_ratios = Vec::new();
            for ca in cells.iter().filter(|c| &c.policy == a) {
                let Some(cb) = index.get(&(b.as_str(), ca.subclass, ca.seed)) else {
                    continue;
                };
                if let (Some(ra), Some(rb)) = (ca.cost_ratio, cb.cost_ratio) {
                    ratio_pairs.push((ra, rb));
                }
                if cb.metrics.dollars > 0.0 {
                    cost_ratios.push(ca.metrics.dollars / cb.metrics.dollars);
                }
            }
            let (w, p, method) = if ratio_pairs.is_empty() {
                (0.0, 1.0, WilcoxonMethod::Degenerate)
            } else {
                let r = wilcoxon_signed_rank(&PairedSample::new(ratio_pairs.clone())?);
                (r.w, r.p_value, r.method)
            };
            let interval = if cost_ratios.len() >= 2 {
                let seed = derive_seed(BOOTSTRAP_SEED, out.len() as u64);
                let iv = bootstrap_bca(
                    &cost_ratios,
                    &median::<f64>,
                    plan.bootstrap_resamples,
                    plan.alpha,
                    seed,
                )?;
                Some(RatioInterval {
                    lo: iv.lo,
                    hi: iv.hi,
                    estimate: iv.estimate,
                    method: iv.method,
                })
            } else {
                None
            };
            out.push(Comparison {
                policy_a: a.clone(),
                policy_b: b.clone(),
                pairs: ratio_pairs.len(),
                wilcoxon_w: w,
                p_value: p,
                method,
                median_cost_ratio: interval,
                holm_adjusted_p: p,
                holm_reject: false,
            });
        }
    }
    let ps: Vec<f64> = out.iter().map(|c| c.p_value).collect();
    let reject = holm_bonferroni(&ps, plan.alpha);
    let adjusted = holm_adjusted(&ps);
    for (i, c) in out.iter_mut().enumerate() {
        c.holm_reject = reject[i];
        c.holm_adjusted_p = adjusted[i];
    }
    Ok(out)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Fixed-width text rendering of the report.
pub fn summary_table(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>5} {:>5} {:>10} {:>7} {:>9} {:>9} {:>8}",
        "policy", "cells", "fail", "dollars", "sla", "ratio-in", "ratio-out", "gap"
    );
    for a in &r.aggregates {
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>5} {:>10} {:>7} {:>9} {:>9} {:>8}",
            a.policy,
            a.cells,
            a.failures,
            opt(a.mean_dollars, 4),
            opt(a.mean_sla_attainment, 3),
            opt(a.in_distribution_mean_ratio, 3),
            opt(a.held_out_mean_ratio, 3),
            opt(a.generalization_gap, 3),
        );
    }
    if !r.comparisons.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<33} {:>5} {:>9} {:>9} {:>23} {:>6}",
            "comparison", "pairs", "p", "holm-p", "median a/b [BCa]", "reject"
        );
        for c in &r.comparisons {
            let ci = c.median_cost_ratio.as_ref().map_or_else(
                || "-".to_string(),
                |i| format!("{:.3} [{:.3}, {:.3}]", i.estimate, i.lo, i.hi),
            );
            let _ = writeln!(
                s,
                "{:<33} {:>5} {:>9.4} {:>9.4} {:>23} {:>6}",
                format!("{} vs {}", c.policy_a, c.policy_b),
                c.pairs,
                c.p_value,
                c.holm_adjusted_p,
                ci,
                if c.holm_reject { "yes" } else { "no" }
            );
        }
    }
    if !r.failures.is_empty() {
        let _ = writeln!(s);
        for f in &r.failures {
            let _ = writeln!(s, "FAILED {} {} seed {}: {}", f.policy, f.subclass, f.seed, f.error);
        }
    }
    s
}
