//! Veristic task sampling: splitting a shuffled class list into a sequence of
//! disjoint tasks whose sizes are drawn from `[low, high]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total number of classes.
    pub tc: usize,
    pub low: usize,
    pub high: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.low && self.low <= self.high && self.high <= self.tc) {
            return Err(invalid_arg!(
                "sampler bounds must satisfy 1 <= low <= high <= tc (got low={}, high={}, tc={})",
                self.low,
                self.high,
                self.tc
            ));
        }
        Ok(())
    }
}

/// Ordered list of disjoint class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub tasks: Vec<Vec<usize>>,
}

impl Scenario {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Cumulative class counts after each task.
    pub fn cumulative(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_classes(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Classes of tasks `0..=t` in arrival order.
    pub fn classes_up_to(&self, t: usize) -> Vec<usize> {
        self.tasks[..=t].iter().flatten().copied().collect()
    }

    /// Index of the task that introduces `class`.
    pub fn task_of(&self, class: usize) -> Option<usize> {
        self.tasks.iter().position(|task| task.contains(&class))
    }

    /// Checks sizes against tasks and pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(invalid_arg!("scenario has no tasks"));
        }
        if self.sizes.len() != self.tasks.len() {
            return Err(invalid_arg!(
                "{} sizes for {} tasks",
                self.sizes.len(),
                self.tasks.len()
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for (t, (task, &size)) in self.tasks.iter().zip(&self.sizes).enumerate() {
            if task.len() != size || size == 0 {
                return Err(invalid_arg!("task {t} has {} classes, size says {size}", task.len()));
            }
            for &c in task {
                if !seen.insert(c) {
                    return Err(invalid_arg!("class {c} appears in more than one task"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Task sizes drawn one at a time; once the remainder is no larger than a
/// fresh draw it becomes the final task.
pub fn sample_task_sizes(config: &SamplerConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let mut rng = rng::derived(config.seed, "task-sizes", 0);
    let mut remaining = config.tc;
    let mut sizes = Vec::new();
    while remaining != 0 {
        let base = rng::randint(&mut rng, config.low, config.high);
        if remaining <= base {
            sizes.push(remaining);
            break;
        }
        sizes.push(base);
        remaining -= base;
    }
    Ok(sizes)
}

fn shuffled_classes(tc: usize, seed: u64) -> Vec<usize> {
    let mut classes: Vec<usize> = (0..tc).collect();
    rng::shuffle(&mut rng::derived(seed, "class-order", 0), &mut classes);
    classes
}

/// Consecutive slices of `classes` with the given lengths.
fn partition(classes: &[usize], sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut offset = 0;
    sizes
        .iter()
        .map(|&len| {
            let task = classes[offset..offset + len].to_vec();
            offset += len;
            task
        })
        .collect()
}

pub fn build_scenario(config: &SamplerConfig) -> Result<Scenario> {
    let sizes = sample_task_sizes(config)?;
    let classes = shuffled_classes(config.tc, config.seed);
    Ok(Scenario {
        seed: config.seed,
        tasks: partition(&classes, &sizes),
        sizes,
    })
}

/// Fixed task sizes over a shuffled class list of `tc` classes; classes past
/// `sum(sizes)` are left unused.
pub fn fixed_scenario(sizes: &[usize], tc: usize, seed: u64) -> Result<Scenario> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(invalid_arg!("task sizes must be non-empty and positive, got {sizes:?}"));
    }
    let total: usize = sizes.iter().sum();
    if total > tc {
        return Err(invalid_arg!("task sizes sum to {total} but only {tc} classes exist"));
    }
    let classes = shuffled_classes(tc, seed);
    Ok(Scenario {
        seed,
        tasks: partition(&classes[..total], sizes),
        sizes: sizes.to_vec(),
    })
}
