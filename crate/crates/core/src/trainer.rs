//! Base-task training, incremental teacher/student steps and the joint bound.

use serde::{Deserialize, Serialize};

use crate::backbones::{BackboneKind, ExtractorConfig, ModelState};
use crate::data::{LabelMapper, TaskDataset};
use crate::error::{invalid_arg, invalid_state, Result};
use crate::losses::{self, CensusContext, DistillConfig, LossKind};
use crate::rng;
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub n_points: usize,
    pub loss: DistillConfig,
    pub extractor: ExtractorConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// 40 epochs, batch 32, Adam at 1e-4, 1024 points, default widths.
    pub fn reference(kind: BackboneKind, loss: LossKind) -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            lr: 1e-4,
            n_points: 1024,
            loss: DistillConfig::new(loss),
            extractor: ExtractorConfig::new(kind),
            seed: 0,
        }
    }

    /// Small enough to run a full scenario in seconds: 10 epochs, 128
    /// points, halved widths, and a larger step to make up for fewer updates.
    pub fn desk(kind: BackboneKind, loss: LossKind) -> Self {
        TrainConfig {
            epochs: 10,
            n_points: 128,
            lr: 1e-3,
            extractor: ExtractorConfig::new(kind).halved(),
            ..Self::reference(kind, loss)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_points == 0 {
            return Err(invalid_arg!("batch_size and n_points must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid_arg!("lr must be positive, got {}", self.lr));
        }
        if self.extractor.kind == BackboneKind::EdgeconvLite && self.n_points <= self.extractor.k_neighbors {
            return Err(invalid_arg!(
                "edgeconv_lite needs n_points > k_neighbors ({} <= {})",
                self.n_points,
                self.extractor.k_neighbors
            ));
        }
        self.loss.validate()?;
        self.extractor.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    fn head_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "head", 0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Objective {
    Class,
    Lwf,
    Census(CensusContext),
}

/// What happened while training one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    pub classes: Vec<usize>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub student_checksum: String,
    pub teacher_checksum: Option<String>,
    pub census_weight: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunState {
    /// Index of the last completed task.
    pub task: usize,
    pub teacher: Option<ModelState>,
    pub student: ModelState,
    pub mapper: LabelMapper,
    pub task_sizes: Vec<usize>,
    pub records: Vec<TaskRecord>,
}

struct Fit {
    epoch_losses: Vec<f64>,
    steps: usize,
}

/// Adam on `student` over `data` for `config.epochs` epochs. Batches follow a
/// per-epoch shuffle and each visit draws a fresh `n_points` subsample; both
/// come from one stream keyed by the run seed and `stream`.
fn fit(
    student: &mut ModelState,
    teacher: Option<&ModelState>,
    data: &TaskDataset,
    mapper: &LabelMapper,
    config: &TrainConfig,
    objective: Objective,
    stream: u64,
) -> Result<Fit> {
    if data.train_len() == 0 {
        return Err(invalid_arg!("training set is empty"));
    }
    let teacher_sum = teacher.map(ModelState::checksum);
    let mut r = rng::derived(config.seed, "fit", stream);
    let mut adam = AdamState::new(config.adam());
    let mut order: Vec<usize> = (0..data.train_len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for _ in 0..config.epochs {
        rng::shuffle(&mut r, &mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let mut clouds = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let cloud = data.train(i);
                clouds.push(cloud.subsample(config.n_points, &mut r)?);
                labels.push(
                    mapper
                        .logit(cloud.global_class)
                        .ok_or_else(|| invalid_state!("class {} has no logit", cloud.global_class))?,
                );
            }
            let mut tape = Tape::new();
            let bound = student.bind(&mut tape, true);
            let logits = student.forward(&mut tape, &bound, &clouds)?;
            let loss = match (objective, teacher) {
                (Objective::Class, _) => losses::class_loss(&mut tape, logits, &labels)?,
                (Objective::Lwf, Some(t)) => {
                    let tb = t.bind(&mut tape, false);
                    let tl = t.forward(&mut tape, &tb, &clouds)?;
                    losses::lwf_loss(&mut tape, tl, logits, &labels, &config.loss)?
                }
                (Objective::Census(ctx), Some(t)) => {
                    let tb = t.bind(&mut tape, false);
                    let tl = t.forward(&mut tape, &tb, &clouds)?;
                    losses::census_loss(&mut tape, tl, logits, &labels, &config.loss, &ctx)?
                }
                _ => return Err(invalid_state!("distillation needs a teacher")),
            };
            total += tape.value(loss)[0];
            batches += 1;
            let grads = tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = bound.vars.iter().map(|&v| grads.wrt(&tape, v)).collect();
            adam_step(&mut student.params_mut()?, &grads, &mut adam)?;
            steps += 1;
        }
        epoch_losses.push(total / batches as f64);
        if let (Some(t), Some(before)) = (teacher, &teacher_sum) {
            if t.checksum() != *before {
                return Err(invalid_state!("teacher parameters changed during training"));
            }
        }
    }
    Ok(Fit { epoch_losses, steps })
}

fn fresh_model(classes: &[usize], config: &TrainConfig) -> Result<(ModelState, LabelMapper)> {
    let mut mapper = LabelMapper::new();
    mapper.map_labels(classes)?;
    let model = ModelState::new(config.extractor.clone(), classes, config.seed)?;
    Ok((model, mapper))
}

/// Trains a fresh model on the first task with the classification loss.
pub fn train_base(task: &TaskDataset, config: &TrainConfig) -> Result<RunState> {
    config.validate()?;
    if task.classes().is_empty() || task.train_len() == 0 {
        return Err(invalid_arg!("base task has no data"));
    }
    let (mut student, mapper) = fresh_model(task.classes(), config)?;
    let fit = fit(&mut student, None, task, &mapper, config, Objective::Class, 0)?;
    let record = TaskRecord {
        task: 0,
        classes: task.classes().to_vec(),
        epoch_losses: fit.epoch_losses,
        steps: fit.steps,
        student_checksum: student.checksum(),
        teacher_checksum: None,
        census_weight: None,
    };
    Ok(RunState {
        task: 0,
        teacher: None,
        student,
        mapper,
        task_sizes: vec![task.classes().len()],
        records: vec![record],
    })
}

/// Freezes the current student as teacher, copies it into a student with
/// columns for the new classes, and trains the student on `task` alone.
pub fn advance_task(state: RunState, task: &TaskDataset, config: &TrainConfig) -> Result<RunState> {
    config.validate()?;
    let new_classes = task.classes();
    if new_classes.is_empty() || task.train_len() == 0 {
        return Err(invalid_arg!("task has no data"));
    }
    if let Some(&c) = new_classes.iter().find(|&&c| state.mapper.logit(c).is_some()) {
        return Err(invalid_arg!("class {c} was already learned"));
    }
    let t = state.task + 1;
    let mut task_sizes = state.task_sizes;
    task_sizes.push(new_classes.len());
    let objective = match config.loss.loss_kind {
        LossKind::Ft => Objective::Class,
        LossKind::Lwf => Objective::Lwf,
        LossKind::Census => Objective::Census(CensusContext::for_task(&task_sizes, t, &config.loss)?),
        LossKind::Joint => return Err(invalid_arg!("the joint bound is trained with train_joint")),
    };

    let teacher = state.student.to_teacher();
    let mut student = ModelState::student_from(&teacher, new_classes, config.head_seed())?;
    let mut mapper = state.mapper;
    mapper.map_labels(new_classes)?;
    let fit = fit(&mut student, Some(&teacher), task, &mapper, config, objective, t as u64)?;

    let mut records = state.records;
    records.push(TaskRecord {
        task: t,
        classes: new_classes.to_vec(),
        epoch_losses: fit.epoch_losses,
        steps: fit.steps,
        student_checksum: student.checksum(),
        teacher_checksum: Some(teacher.checksum()),
        census_weight: match objective {
            Objective::Census(ctx) => Some(ctx.weight()),
            _ => None,
        },
    });
    Ok(RunState {
        task: t,
        teacher: Some(teacher),
        student,
        mapper,
        task_sizes,
        records,
    })
}

/// A fresh model trained on the pooled data of every task in `data`.
/// Over a single task this reproduces [`train_base`] exactly.
pub fn train_joint(data: &TaskDataset, config: &TrainConfig) -> Result<ModelState> {
    let base_config = TrainConfig {
        loss: DistillConfig {
            loss_kind: LossKind::Joint,
            ..config.loss
        },
        ..config.clone()
    };
    base_config.validate()?;
    if data.classes().is_empty() || data.train_len() == 0 {
        return Err(invalid_arg!("joint training needs a non-empty union"));
    }
    let (mut model, mapper) = fresh_model(data.classes(), config)?;
    let stream = data.tasks().last().copied().unwrap_or(0) as u64;
    fit(&mut model, None, data, &mapper, config, Objective::Class, stream)?;
    Ok(model)
}
