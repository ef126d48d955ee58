//! Training objectives over student logits and, for incremental tasks, the
//! frozen teacher's logits.
//!
//! Every loss averages over the `N` rows of the batch. Distillation compares
//! the teacher's `M_old` outputs with the first `M_old` student columns, and
//! the teacher distribution enters the tape as a constant.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::tensor::{softmax_with_temperature, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Joint,
    Ft,
    Lwf,
    Census,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Joint, LossKind::Ft, LossKind::Lwf, LossKind::Census];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Joint => "joint",
            LossKind::Ft => "ft",
            LossKind::Lwf => "lwf",
            LossKind::Census => "census",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            LossKind::Joint => "Joint",
            LossKind::Ft => "FT",
            LossKind::Lwf => "LwF",
            LossKind::Census => "Census",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LossKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid_arg!("unknown loss {s:?}, expected joint, ft, lwf or census"))
    }
}

/// How `T` counts tasks for the census weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCount {
    /// Completed tasks, base included: the first incremental task has `T = 1`.
    #[default]
    Elapsed,
    /// 1-based index of the current task: the first incremental task has `T = 2`.
    CurrentIndex,
}

/// What `η` counts for the census weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassCount {
    /// Classes introduced by the current task.
    #[default]
    CurrentTask,
    /// Classes seen so far, current task included.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub tau: f64,
    pub lambda_lwf: f64,
    pub loss_kind: LossKind,
    #[serde(default)]
    pub census_tasks: TaskCount,
    #[serde(default)]
    pub census_classes: ClassCount,
}

impl DistillConfig {
    pub fn new(loss_kind: LossKind) -> Self {
        DistillConfig {
            tau: 2.0,
            lambda_lwf: 1.0,
            loss_kind,
            census_tasks: TaskCount::Elapsed,
            census_classes: ClassCount::CurrentTask,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid_arg!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda_lwf >= 0.0 && self.lambda_lwf.is_finite()) {
            return Err(invalid_arg!("lambda_lwf must be non-negative, got {}", self.lambda_lwf));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusContext {
    pub eta: usize,
    pub tasks_elapsed: usize,
}

impl CensusContext {
    /// Context for incremental task `t` (0-based, `t >= 1`) of a scenario with
    /// the given task sizes.
    pub fn for_task(sizes: &[usize], t: usize, config: &DistillConfig) -> Result<Self> {
        if t == 0 || t >= sizes.len() {
            return Err(invalid_arg!(
                "task {t} is not an incremental task of a {}-task scenario",
                sizes.len()
            ));
        }
        let eta = match config.census_classes {
            ClassCount::CurrentTask => sizes[t],
            ClassCount::Cumulative => sizes[..=t].iter().sum(),
        };
        let tasks_elapsed = match config.census_tasks {
            TaskCount::Elapsed => t,
            TaskCount::CurrentIndex => t + 1,
        };
        Ok(CensusContext { eta, tasks_elapsed })
    }

    pub fn weight(&self) -> f64 {
        (self.eta * self.tasks_elapsed) as f64
    }
}

fn rows_cols(tape: &Tape, var: Var, what: &str) -> Result<(usize, usize)> {
    match tape.shape(var) {
        &[r, c] => Ok((r, c)),
        other => Err(invalid_arg!("{what} must be [N, M], got {other:?}")),
    }
}

/// Mean cross-entropy of `softmax(logits)` against integer labels.
pub fn class_loss(tape: &mut Tape, student_logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, m) = rows_cols(tape, student_logits, "student logits")?;
    if labels.len() != n {
        return Err(invalid_arg!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= m) {
        return Err(invalid_arg!("label {bad} out of range for {m} classes"));
    }
    let log_probs = tape.log_softmax(student_logits, 1.0)?;
    tape.nll(log_probs, labels)
}

/// `-(1/N) Σ softmax(teacher/τ) · log_softmax(student[:, ..M_old]/τ)`.
pub fn distill_loss(tape: &mut Tape, teacher_logits: Var, student_logits: Var, tau: f64) -> Result<Var> {
    let (n, m_old) = rows_cols(tape, teacher_logits, "teacher logits")?;
    let (ns, m) = rows_cols(tape, student_logits, "student logits")?;
    if n != ns {
        return Err(invalid_arg!("teacher has {n} rows, student {ns}"));
    }
    if m < m_old {
        return Err(invalid_arg!("student has {m} columns, teacher {m_old}"));
    }
    let mut target = Vec::with_capacity(n * m_old);
    for row in tape.value(teacher_logits).chunks_exact(m_old) {
        target.extend(softmax_with_temperature(row, tau)?);
    }
    let target = tape.constant(&Tensor::matrix(n, m_old, target)?);
    let old = tape.slice_cols(student_logits, 0, m_old)?;
    let log_student = tape.log_softmax(old, tau)?;
    let cross = tape.mul(target, log_student)?;
    let total = tape.sum(cross)?;
    tape.scale(total, -1.0 / n as f64)
}

/// `class + weight * distill`.
fn weighted(tape: &mut Tape, teacher: Var, student: Var, labels: &[usize], tau: f64, weight: f64) -> Result<Var> {
    let class = class_loss(tape, student, labels)?;
    let distill = distill_loss(tape, teacher, student, tau)?;
    let scaled = tape.scale(distill, weight)?;
    tape.add(scaled, class)
}

pub fn lwf_loss(tape: &mut Tape, teacher: Var, student: Var, labels: &[usize], config: &DistillConfig) -> Result<Var> {
    config.validate()?;
    weighted(tape, teacher, student, labels, config.tau, config.lambda_lwf)
}

pub fn census_loss(
    tape: &mut Tape,
    teacher: Var,
    student: Var,
    labels: &[usize],
    config: &DistillConfig,
    ctx: &CensusContext,
) -> Result<Var> {
    config.validate()?;
    if ctx.eta == 0 || ctx.tasks_elapsed == 0 {
        return Err(invalid_arg!("census context needs eta >= 1 and T >= 1, got {ctx:?}"));
    }
    weighted(tape, teacher, student, labels, config.tau, ctx.weight())
}
