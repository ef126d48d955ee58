//! Union-of-seen-classes evaluation, forgetting, multi-seed aggregation and
//! report files.
//!
//! `results.json` has the shape
//! `{scenario, seeds, std, runs: [{backbone, loss, columns: [{task, classes, mean, std}], ...}], provenance}`;
//! `results.csv` holds one row per (backbone, loss); `table.txt` lays the
//! means out per backbone with the best non-joint method per column marked
//! `**x**` and the runner-up `*x*`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbones::{BackboneKind, ModelState};
use crate::data::TaskDataset;
use crate::error::{invalid_arg, invalid_state, Result};
use crate::losses::LossKind;
use crate::sampler::Scenario;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Accuracy after training one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: usize,
    /// Micro-averaged accuracy over the pooled test set of tasks `0..=task`.
    pub union: f64,
    pub correct: usize,
    pub total: usize,
    /// Accuracy on each seen task's test classes.
    pub per_task: Vec<f64>,
    pub per_task_total: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub rows: Vec<EvalRow>,
}

impl AccuracyMatrix {
    pub fn union(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.union).collect()
    }

    pub fn last_union(&self) -> Option<f64> {
        self.rows.last().map(|r| r.union)
    }
}

/// Predicted global class per cloud, evaluating in batches of `batch`.
pub fn predict(model: &ModelState, clouds: &[Vec<[f64; 3]>], batch: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(clouds.len());
    for chunk in clouds.chunks(batch.max(1)) {
        for logits in model.logits(chunk)? {
            out.push(model.head.class_slots[argmax(&logits)]);
        }
    }
    Ok(out)
}

/// Top-1 accuracy of `model` over every test sample in `data`, which must be
/// the pooled view of tasks `0..=t`. Each test cloud is evaluated on its fixed
/// `n_points` subsample.
pub fn evaluate_union(model: &ModelState, data: &TaskDataset, n_points: usize, batch: usize) -> Result<EvalRow> {
    let seen: HashSet<usize> = data.classes().iter().copied().collect();
    let slots: HashSet<usize> = model.head.class_slots.iter().copied().collect();
    if seen != slots {
        return Err(invalid_state!(
            "model head covers {} classes, the evaluation union has {}",
            slots.len(),
            seen.len()
        ));
    }
    let t = *data
        .tasks()
        .last()
        .ok_or_else(|| invalid_arg!("no tasks to evaluate"))?;
    if data.tasks() != (0..=t).collect::<Vec<_>>() {
        return Err(invalid_arg!("evaluation needs tasks 0..={t}, got {:?}", data.tasks()));
    }
    let mut clouds = Vec::with_capacity(data.test_len());
    let mut truth = Vec::with_capacity(data.test_len());
    for i in 0..data.test_len() {
        let cloud = data.test(i);
        clouds.push(cloud.eval_points(n_points)?);
        truth.push((cloud.global_class, data.test_task(i)));
    }
    let predicted = predict(model, &clouds, batch)?;
    let mut hits = vec![0usize; t + 1];
    let mut totals = vec![0usize; t + 1];
    for (&p, &(y, task)) in predicted.iter().zip(&truth) {
        totals[task] += 1;
        if p == y {
            hits[task] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    let total: usize = totals.iter().sum();
    if total == 0 {
        return Err(invalid_arg!("no test samples"));
    }
    Ok(EvalRow {
        task: t,
        union: correct as f64 / total as f64,
        correct,
        total,
        per_task: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
            .collect(),
        per_task_total: totals,
    })
}

/// For every task but the last: best accuracy it ever had minus its accuracy
/// after the final task.
pub fn forgetting_measure(matrix: &AccuracyMatrix) -> Vec<f64> {
    let Some(last) = matrix.rows.last() else {
        return Vec::new();
    };
    let final_t = matrix.rows.len() - 1;
    (0..final_t)
        .map(|j| {
            let best = matrix.rows[j..]
                .iter()
                .map(|r| r.per_task[j])
                .fold(f64::NEG_INFINITY, f64::max);
            best - last.per_task[j]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

pub fn mean_std(values: &[f64], kind: StdKind) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match kind {
        StdKind::Population => n,
        StdKind::Sample if values.len() > 1 => n - 1.0,
        StdKind::Sample => return (mean, 0.0),
    };
    (mean, (ss / denom).sqrt())
}

/// One finished (backbone, loss, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub backbone: BackboneKind,
    pub loss: LossKind,
    pub seed: u64,
    pub matrix: AccuracyMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub task: usize,
    /// Classes seen after this task.
    pub classes: usize,
    pub mean: f64,
    pub std: f64,
    /// 1 for the best non-joint method of the backbone in this column, 2 for the runner-up.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub backbone: BackboneKind,
    pub loss: LossKind,
    pub columns: Vec<Column>,
    /// Union accuracy per seed, in seed order.
    pub per_seed: Vec<Vec<f64>>,
    pub forgetting_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub std: StdKind,
    pub runs: Vec<MethodSummary>,
}

impl AggregateReport {
    pub fn summary(&self, backbone: BackboneKind, loss: LossKind) -> Option<&MethodSummary> {
        self.runs.iter().find(|m| m.backbone == backbone && m.loss == loss)
    }
}

/// Mean and std over seeds for every (backbone, loss), plus rank marks.
pub fn aggregate(runs: &[RunResult], scenario: &Scenario, std: StdKind) -> Result<AggregateReport> {
    let width = scenario.num_tasks();
    if let Some(bad) = runs.iter().find(|r| r.matrix.rows.len() != width) {
        return Err(invalid_arg!(
            "{} {} seed {} has {} columns, scenario has {width}",
            bad.backbone,
            bad.loss,
            bad.seed,
            bad.matrix.rows.len()
        ));
    }
    let mut groups: BTreeMap<(BackboneKind, LossKind), Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.backbone, r.loss)).or_default().push(r);
    }
    let cumulative = scenario.cumulative();
    let mut summaries = Vec::new();
    for ((backbone, loss), mut group) in groups {
        group.sort_by_key(|r| r.seed);
        let per_seed: Vec<Vec<f64>> = group.iter().map(|r| r.matrix.union()).collect();
        let columns = (0..width)
            .map(|t| {
                let values: Vec<f64> = per_seed.iter().map(|s| s[t]).collect();
                let (mean, std) = mean_std(&values, std);
                Column {
                    task: t + 1,
                    classes: cumulative[t],
                    mean,
                    std,
                    rank: None,
                }
            })
            .collect();
        let forgetting: Vec<Vec<f64>> = group.iter().map(|r| forgetting_measure(&r.matrix)).collect();
        let forgetting_mean = (0..width.saturating_sub(1))
            .map(|j| forgetting.iter().map(|f| f[j]).sum::<f64>() / forgetting.len() as f64)
            .collect();
        summaries.push(MethodSummary {
            backbone,
            loss,
            columns,
            per_seed,
            forgetting_mean,
        });
    }
    rank_columns(&mut summaries);
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    Ok(AggregateReport {
        scenario: scenario.clone(),
        seeds,
        std,
        runs: summaries,
    })
}

/// Marks the best and second-best non-joint mean per backbone and column.
/// Equal means keep the method order joint, ft, lwf, census.
fn rank_columns(summaries: &mut [MethodSummary]) {
    let backbones: Vec<BackboneKind> = summaries.iter().map(|m| m.backbone).collect();
    for backbone in backbones {
        let members: Vec<usize> = (0..summaries.len())
            .filter(|&i| summaries[i].backbone == backbone && summaries[i].loss != LossKind::Joint)
            .collect();
        let width = summaries.first().map_or(0, |m| m.columns.len());
        for c in 0..width {
            let mut order = members.clone();
            order.sort_by(|&a, &b| {
                summaries[b].columns[c]
                    .mean
                    .total_cmp(&summaries[a].columns[c].mean)
                    .then(summaries[a].loss.cmp(&summaries[b].loss))
            });
            for (rank, &i) in order.iter().take(2).enumerate() {
                summaries[i].columns[c].rank = Some(rank as u8 + 1);
            }
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn render_csv(report: &AggregateReport) -> String {
    let mut out = String::from("backbone,loss");
    for t in 1..=report.scenario.num_tasks() {
        let _ = write!(out, ",t{t}_mean,t{t}_std");
    }
    out.push('\n');
    for m in &report.runs {
        let _ = write!(out, "{},{}", m.backbone, m.loss);
        for c in &m.columns {
            let _ = write!(out, ",{:.6},{:.6}", c.mean, c.std);
        }
        out.push('\n');
    }
    out
}

pub fn render_table(report: &AggregateReport) -> String {
    let cells: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|m| {
            m.columns
                .iter()
                .map(|c| {
                    let v = format!("{} ± {}", pct(c.mean), pct(c.std));
                    match c.rank {
                        Some(1) => format!("**{v}**"),
                        Some(2) => format!("*{v}*"),
                        _ => v,
                    }
                })
                .collect()
        })
        .collect();
    let header: Vec<String> = report.scenario.sizes.iter().map(|s| s.to_string()).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let label_width = report
        .runs
        .iter()
        .map(|m| m.backbone.as_str().len() + m.loss.label().len() + 3)
        .max()
        .unwrap_or(0)
        .max("Method".len());
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));

    let mut out = String::new();
    let _ = writeln!(out, "seeds: {:?}   std: {:?}", report.seeds, report.std);
    let mut line = pad("Method", label_width);
    for (h, &w) in header.iter().zip(&widths) {
        line.push_str(" | ");
        line.push_str(&pad(h, w));
    }
    let _ = writeln!(out, "{}", line.trim_end());
    let _ = writeln!(out, "{}", "-".repeat(line.trim_end().chars().count()));
    for (m, row) in report.runs.iter().zip(&cells) {
        let mut line = pad(&format!("{} + {}", m.backbone, m.loss.label()), label_width);
        for (cell, &w) in row.iter().zip(&widths) {
            line.push_str(" | ");
            line.push_str(&pad(cell, w));
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    #[serde(flatten)]
    report: &'a AggregateReport,
    provenance: &'a serde_json::Value,
}

/// Writes `results.json`, `results.csv` and `table.txt` into `dir`.
pub fn emit(report: &AggregateReport, provenance: &serde_json::Value, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&ResultsFile { report, provenance })?;
    crate::io::write_atomic(&dir.join("results.json"), json.as_bytes())?;
    crate::io::write_atomic(&dir.join("results.csv"), render_csv(report).as_bytes())?;
    crate::io::write_atomic(&dir.join("table.txt"), render_table(report).as_bytes())
}
