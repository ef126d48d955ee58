use std::path::Path;

use serde::Serialize;

use super::run::{read_manifests, RunManifest, RUNS_DIR};
use crate::backbones::{BackboneKind, ModelState};
use crate::error::{Error, Result};
use crate::harness::{aggregate, mean_std, AggregateReport, RunResult};
use crate::losses::{CensusContext, LossKind};

/// Slack allowed between methods in the ordering trend.
pub const ORDERING_SLACK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// Must hold for any correct bundle.
    Invariant,
    /// Expected at scale; reported but not fatal.
    Trend,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub severity: Severity,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, problems: Vec<String>) -> Check {
    Check {
        name,
        severity: Severity::Invariant,
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            "ok".into()
        } else {
            problems.join("; ")
        },
    }
}

/// Runs the invariant suite over the results bundle in `dir`. Run
/// directories, when present, are checked as well.
pub fn verify_bundle(dir: &Path) -> Result<Vec<Check>> {
    let path = dir.join("results.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: AggregateReport = serde_json::from_str(&text)?;
    let mut checks = report_checks(&report);
    if dir.join(RUNS_DIR).is_dir() {
        checks.extend(manifest_checks(&report, &read_manifests(dir)?, dir));
    }
    Ok(checks)
}

fn report_checks(report: &AggregateReport) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(check(
        "scenario partition",
        report
            .scenario
            .validate()
            .err()
            .map(|e| e.to_string())
            .into_iter()
            .collect(),
    ));

    let cumulative = report.scenario.cumulative();
    let mut bounds = Vec::new();
    let mut stats = Vec::new();
    for m in &report.runs {
        let id = format!("{} {}", m.backbone, m.loss);
        if m.columns.len() != cumulative.len() {
            stats.push(format!(
                "{id}: {} columns for {} tasks",
                m.columns.len(),
                cumulative.len()
            ));
            continue;
        }
        for (c, col) in m.columns.iter().enumerate() {
            if !(0.0..=1.0).contains(&col.mean) || col.std < 0.0 {
                bounds.push(format!("{id} column {}: mean {} std {}", col.task, col.mean, col.std));
            }
            if col.classes != cumulative[c] {
                stats.push(format!("{id} column {} lists {} classes", col.task, col.classes));
            }
            let values: Vec<f64> = m.per_seed.iter().map(|s| s[c]).collect();
            let (mean, std) = mean_std(&values, report.std);
            if (mean - col.mean).abs() > 1e-12 || (std - col.std).abs() > 1e-12 {
                stats.push(format!(
                    "{id} column {}: stored {}±{}, recomputed {mean}±{std}",
                    col.task, col.mean, col.std
                ));
            }
        }
    }
    checks.push(check("accuracy bounds", bounds));
    checks.push(check("mean and std recompute", stats));

    let mut ranks = Vec::new();
    for backbone in backbones(report) {
        let members: Vec<_> = report
            .runs
            .iter()
            .filter(|m| m.backbone == backbone && m.loss != LossKind::Joint)
            .collect();
        for c in 0..cumulative.len() {
            let mut order = members.clone();
            order.sort_by(|a, b| {
                b.columns[c]
                    .mean
                    .total_cmp(&a.columns[c].mean)
                    .then(a.loss.cmp(&b.loss))
            });
            for (i, m) in order.iter().enumerate() {
                let want = if i < 2 { Some(i as u8 + 1) } else { None };
                if m.columns.get(c).map(|col| col.rank) != Some(want) {
                    ranks.push(format!("{backbone} {} column {}", m.loss, c + 1));
                }
            }
        }
    }
    checks.push(check("rank marks", ranks));

    let mut base = Vec::new();
    for backbone in backbones(report) {
        let firsts: Vec<(LossKind, Vec<f64>)> = report
            .runs
            .iter()
            .filter(|m| m.backbone == backbone)
            .map(|m| (m.loss, m.per_seed.iter().map(|s| s[0]).collect()))
            .collect();
        if let Some((_, reference)) = firsts.first() {
            for (loss, f) in &firsts {
                if f != reference {
                    base.push(format!(
                        "{backbone} {loss} first column {f:?} differs from {reference:?}"
                    ));
                }
            }
        }
    }
    checks.push(check("first column identical across losses", base));

    let mut order = Vec::new();
    for backbone in backbones(report) {
        let last = |loss| {
            report
                .summary(backbone, loss)
                .and_then(|m| m.columns.last())
                .map(|c| c.mean)
        };
        let chain = [LossKind::Joint, LossKind::Census, LossKind::Lwf, LossKind::Ft];
        for pair in chain.windows(2) {
            if let (Some(hi), Some(lo)) = (last(pair[0]), last(pair[1])) {
                if hi + ORDERING_SLACK < lo {
                    order.push(format!("{backbone}: {} {hi:.4} < {} {lo:.4}", pair[0], pair[1]));
                }
            }
        }
    }
    checks.push(Check {
        severity: Severity::Trend,
        ..check("joint >= census >= lwf >= ft (final column)", order)
    });
    checks
}

fn backbones(report: &AggregateReport) -> Vec<BackboneKind> {
    let mut b: Vec<BackboneKind> = report.runs.iter().map(|m| m.backbone).collect();
    b.dedup();
    b
}

fn manifest_checks(report: &AggregateReport, manifests: &[RunManifest], dir: &Path) -> Vec<Check> {
    let scenario = &report.scenario;
    let tasks = scenario.num_tasks();
    let mut union = Vec::new();
    let mut growth = Vec::new();
    let mut chain = Vec::new();
    let mut reads = Vec::new();
    let mut census = Vec::new();

    for m in manifests {
        let id = m.key.to_string();
        if m.scenario != *scenario {
            growth.push(format!("{id}: scenario differs from results.json"));
            continue;
        }
        for row in &m.matrix.rows {
            let hits: f64 = row
                .per_task
                .iter()
                .zip(&row.per_task_total)
                .map(|(a, &n)| a * n as f64)
                .sum();
            let total: usize = row.per_task_total.iter().sum();
            if total != row.total || (hits / total as f64 - row.union).abs() > 1e-12 {
                union.push(format!("{id} task {}", row.task));
            }
        }
        match m
            .checkpoints
            .last()
            .map(|name| ModelState::load(&dir.join(RUNS_DIR).join(m.key.dir_name()).join(name)))
        {
            Some(Ok(model)) => {
                let expected: Vec<usize> = scenario.tasks.iter().flatten().copied().collect();
                if model.head.class_slots != expected {
                    growth.push(format!("{id}: final head slots {:?}", model.head.class_slots));
                }
            }
            Some(Err(e)) => growth.push(format!("{id}: {e}")),
            None => growth.push(format!("{id}: no checkpoints")),
        }
        if m.checkpoints.len() != tasks || m.matrix.rows.len() != tasks {
            growth.push(format!(
                "{id}: {} checkpoints, {} rows",
                m.checkpoints.len(),
                m.matrix.rows.len()
            ));
        }
        if m.key.loss == LossKind::Joint {
            continue;
        }
        for (t, r) in m.records.iter().enumerate() {
            if r.classes != scenario.tasks[t] {
                growth.push(format!("{id} task {t}: classes {:?}", r.classes));
            }
            if t > 0 && r.teacher_checksum.as_ref() != Some(&m.records[t - 1].student_checksum) {
                chain.push(format!("{id} task {t}"));
            }
            let want = match (m.key.loss, t) {
                (LossKind::Census, 1..) => CensusContext::for_task(&scenario.sizes, t, &m.train.loss)
                    .ok()
                    .map(|c| c.weight()),
                _ => None,
            };
            if r.census_weight != want {
                census.push(format!("{id} task {t}: {:?} vs {want:?}", r.census_weight));
            }
        }
        if m.prior_task_reads.len() != tasks || m.prior_task_reads.iter().any(|&n| n != 0) {
            reads.push(format!("{id}: {:?}", m.prior_task_reads));
        }
    }

    let results: Vec<RunResult> = manifests.iter().map(RunManifest::result).collect();
    let consistent = match aggregate(&results, scenario, report.std) {
        Ok(again) if again.runs == report.runs && again.seeds == report.seeds => Vec::new(),
        Ok(_) => vec!["run directories aggregate to a different report".to_string()],
        Err(e) => vec![e.to_string()],
    };

    vec![
        check("union is the sample-weighted per-task accuracy", union),
        check("head growth follows the scenario", growth),
        check("teacher is the previous student", chain),
        check("no prior-task training reads", reads),
        check("census weight is eta * T", census),
        check("runs reproduce results.json", consistent),
    ]
}
