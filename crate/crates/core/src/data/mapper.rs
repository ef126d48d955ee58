use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_state, Result};

/// Global class id to logit index, assigned in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct LabelMapper {
    order: Vec<usize>,
    index: HashMap<usize, usize>,
}

impl From<Vec<usize>> for LabelMapper {
    fn from(order: Vec<usize>) -> Self {
        let index = order.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        LabelMapper { order, index }
    }
}

impl From<LabelMapper> for Vec<usize> {
    fn from(m: LabelMapper) -> Self {
        m.order
    }
}

impl LabelMapper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a task's classes; fails without modifying the mapper if any
    /// class is already mapped or repeated.
    pub fn map_labels(&mut self, task_classes: &[usize]) -> Result<()> {
        let mut fresh = std::collections::HashSet::new();
        for &c in task_classes {
            if self.index.contains_key(&c) || !fresh.insert(c) {
                return Err(invalid_state!("class {c} is already mapped to a logit"));
            }
        }
        for &c in task_classes {
            self.index.insert(c, self.order.len());
            self.order.push(c);
        }
        Ok(())
    }

    pub fn logit(&self, class: usize) -> Option<usize> {
        self.index.get(&class).copied()
    }

    pub fn class(&self, logit: usize) -> Option<usize> {
        self.order.get(logit).copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Mapped classes in logit order.
    pub fn classes(&self) -> &[usize] {
        &self.order
    }
}
