use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{Dataset, PointCloud, Split};
use crate::error::{invalid_arg, Result};
use crate::sampler::Scenario;

/// Training-sample reads, counted per task.
#[derive(Debug)]
struct ReadLog {
    train: Vec<AtomicUsize>,
    test: Vec<AtomicUsize>,
}

/// The samples one training call may touch. Each access to a training cloud
/// is counted against the task that owns it.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    tasks: Vec<usize>,
    classes: Vec<usize>,
    // (owning task, index into the dataset split)
    train: Vec<(usize, usize)>,
    test: Vec<(usize, usize)>,
    source: Arc<Dataset>,
    log: Arc<ReadLog>,
}

impl TaskDataset {
    /// Tasks whose data this view exposes.
    pub fn tasks(&self) -> &[usize] {
        &self.tasks
    }

    /// Classes in arrival order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }

    pub fn train(&self, i: usize) -> &PointCloud {
        let (task, idx) = self.train[i];
        self.log.train[task].fetch_add(1, Ordering::Relaxed);
        &self.source.train[idx]
    }

    pub fn test(&self, i: usize) -> &PointCloud {
        let (task, idx) = self.test[i];
        self.log.test[task].fetch_add(1, Ordering::Relaxed);
        &self.source.test[idx]
    }

    /// Task that owns test sample `i`; does not count as a read.
    pub fn test_task(&self, i: usize) -> usize {
        self.test[i].0
    }

    pub fn split_len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_len(),
            Split::Test => self.test_len(),
        }
    }
}

/// Hands out one task's data at a time and records every sample read.
#[derive(Debug)]
pub struct TaskDataProvider {
    dataset: Arc<Dataset>,
    scenario: Scenario,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    log: Arc<ReadLog>,
}

impl TaskDataProvider {
    /// Fails when a scenario class is unknown to the dataset, missing from
    /// either split, or when a source id appears in both splits.
    pub fn new(dataset: Arc<Dataset>, scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let owner: HashMap<usize, usize> = scenario
            .tasks
            .iter()
            .enumerate()
            .flat_map(|(t, classes)| classes.iter().map(move |&c| (c, t)))
            .collect();
        if let Some(&c) = owner.keys().find(|&&c| c >= dataset.num_classes) {
            return Err(invalid_arg!(
                "scenario class {c} is outside the {}-class dataset",
                dataset.num_classes
            ));
        }
        let index = |clouds: &[PointCloud]| {
            let mut per_task = vec![Vec::new(); scenario.num_tasks()];
            for (i, cloud) in clouds.iter().enumerate() {
                if let Some(&t) = owner.get(&cloud.global_class) {
                    per_task[t].push(i);
                }
            }
            per_task
        };
        let train = index(&dataset.train);
        let test = index(&dataset.test);

        for (split, lists, clouds) in [("train", &train, &dataset.train), ("test", &test, &dataset.test)] {
            let present: HashSet<usize> = lists.iter().flatten().map(|&i| clouds[i].global_class).collect();
            if let Some(c) = owner.keys().find(|c| !present.contains(c)) {
                return Err(invalid_arg!("class {c} has no {split} samples"));
            }
        }
        let train_ids: HashSet<&str> = dataset.train.iter().map(|c| c.source_id.as_str()).collect();
        if let Some(dup) = dataset.test.iter().find(|c| train_ids.contains(c.source_id.as_str())) {
            return Err(invalid_arg!("{} appears in both train and test splits", dup.source_id));
        }

        let n = scenario.num_tasks();
        Ok(TaskDataProvider {
            dataset,
            scenario,
            train,
            test,
            log: Arc::new(ReadLog {
                train: (0..n).map(|_| AtomicUsize::new(0)).collect(),
                test: (0..n).map(|_| AtomicUsize::new(0)).collect(),
            }),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn num_tasks(&self) -> usize {
        self.scenario.num_tasks()
    }

    fn view(&self, tasks: Vec<usize>) -> Result<TaskDataset> {
        if let Some(&t) = tasks.iter().find(|&&t| t >= self.num_tasks()) {
            return Err(invalid_arg!(
                "task {t} does not exist, scenario has {}",
                self.num_tasks()
            ));
        }
        let pairs = |lists: &[Vec<usize>]| -> Vec<(usize, usize)> {
            tasks
                .iter()
                .flat_map(|&t| lists[t].iter().map(move |&i| (t, i)))
                .collect()
        };
        Ok(TaskDataset {
            classes: tasks
                .iter()
                .flat_map(|&t| self.scenario.tasks[t].iter().copied())
                .collect(),
            train: pairs(&self.train),
            test: pairs(&self.test),
            tasks,
            source: Arc::clone(&self.dataset),
            log: Arc::clone(&self.log),
        })
    }

    /// Task `t` alone: the only view incremental training receives.
    pub fn task(&self, t: usize) -> Result<TaskDataset> {
        self.view(vec![t])
    }

    /// Tasks `0..=t` pooled, for the joint reference bound and union evaluation.
    pub fn pooled(&self, up_to: usize) -> Result<TaskDataset> {
        self.view((0..=up_to).collect())
    }

    /// Training-sample reads so far, per task.
    pub fn train_reads(&self) -> Vec<usize> {
        self.log.train.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    pub fn test_reads(&self) -> Vec<usize> {
        self.log.test.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }
}
