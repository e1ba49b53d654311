use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataprep::ProcessedDataset;
use crate::seed::Rng;

/// Row indices grouped by class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaDataset {
    pub class_index: BTreeMap<usize, Vec<usize>>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("dataset has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("only {eligible} class(es) have {needed}+ rows; {n_ways}-way tasks impossible")]
    InsufficientRows {
        eligible: usize,
        needed: usize,
        n_ways: usize,
    },
    #[error("invalid task config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub n_ways: usize,
    pub k_shots: usize,
    pub m_tasks: usize,
    pub task_size: usize,
}

impl TaskConfig {
    pub fn train_defaults() -> Self {
        Self {
            n_ways: 2,
            k_shots: 1,
            m_tasks: 10,
            task_size: 256,
        }
    }

    pub fn adapt_defaults() -> Self {
        Self {
            task_size: 64,
            ..Self::train_defaults()
        }
    }

    pub fn with_shots(mut self, k: usize) -> Self {
        self.k_shots = k;
        self
    }

    pub fn validate(&self, n_classes: usize) -> Result<(), TaskError> {
        if self.n_ways < 2 {
            return Err(TaskError::Config("n_ways must be at least 2".into()));
        }
        if self.k_shots < 1 || self.m_tasks < 1 {
            return Err(TaskError::Config("k_shots and m_tasks must be positive".into()));
        }
        if self.n_ways > n_classes {
            return Err(TaskError::Config(format!(
                "n_ways {} exceeds the {n_classes} available classes",
                self.n_ways
            )));
        }
        if self.n_ways * self.k_shots >= self.task_size {
            return Err(TaskError::Config(format!(
                "n_ways * k_shots = {} leaves no evaluation rows in task_size {}",
                self.n_ways * self.k_shots,
                self.task_size
            )));
        }
        Ok(())
    }
}

/// One episode. `classes[j]` is the original class behind remapped label
/// `j`; classes are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub classes: Vec<usize>,
    pub adapt_rows: Vec<usize>,
    pub adapt_labels: Vec<usize>,
    pub eval_rows: Vec<usize>,
    pub eval_labels: Vec<usize>,
}

pub fn build_meta_dataset(p: &ProcessedDataset) -> Result<MetaDataset, TaskError> {
    MetaDataset::from_labels(&p.labels)
}

impl MetaDataset {
    /// Partitions row indices by class label.
    pub fn from_labels(labels: &[usize]) -> Result<Self, TaskError> {
        let mut class_index: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            class_index.entry(c).or_default().push(i);
        }
        if class_index.len() < 2 {
            return Err(TaskError::TooFewClasses(class_index.len()));
        }
        Ok(Self { class_index })
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }
}

/// Draws `n_ways` classes uniformly among those with at least `k_shots + 1`
/// rows, `k_shots` adaptation rows from each, and fills the evaluation
/// split round-robin across the chosen classes up to `task_size` rows.
pub fn sample_task(meta: &MetaDataset, cfg: &TaskConfig, rng: &mut Rng) -> Result<Task, TaskError> {
    cfg.validate(meta.n_classes())?;
    let k = cfg.k_shots;
    let eligible: Vec<(&usize, &Vec<usize>)> = meta.class_index.iter().filter(|(_, rows)| rows.len() > k).collect();
    if eligible.len() < cfg.n_ways {
        return Err(TaskError::InsufficientRows {
            eligible: eligible.len(),
            needed: k + 1,
            n_ways: cfg.n_ways,
        });
    }
    let mut picked: Vec<usize> = index::sample(rng, eligible.len(), cfg.n_ways).into_vec();
    picked.sort_unstable();

    let avail: Vec<usize> = picked.iter().map(|&i| eligible[i].1.len() - k).collect();
    let mut quota = vec![0usize; picked.len()];
    let mut remaining = cfg.task_size - cfg.n_ways * k;
    while remaining > 0 {
        let mut progressed = false;
        for (q, a) in quota.iter_mut().zip(&avail) {
            if remaining == 0 {
                break;
            }
            if *q < *a {
                *q += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut task = Task {
        classes: picked.iter().map(|&i| *eligible[i].0).collect(),
        adapt_rows: Vec::with_capacity(cfg.n_ways * k),
        adapt_labels: Vec::with_capacity(cfg.n_ways * k),
        eval_rows: Vec::new(),
        eval_labels: Vec::new(),
    };
    for (label, (&i, &q)) in picked.iter().zip(&quota).enumerate() {
        let rows = eligible[i].1;
        let chosen = index::sample(rng, rows.len(), k + q);
        for (n, r) in chosen.iter().enumerate() {
            if n < k {
                task.adapt_rows.push(rows[r]);
                task.adapt_labels.push(label);
            } else {
                task.eval_rows.push(rows[r]);
                task.eval_labels.push(label);
            }
        }
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::TransformManifest;
    use crate::seed;

    pub(crate) fn dataset(labels: Vec<usize>) -> ProcessedDataset {
        let manifest: TransformManifest = serde_json::from_value(serde_json::json!({
            "format_version": 1, "schema_name": "t", "schema_version": "v1",
            "feature_order": ["x"], "dropped_features": [], "enum_codes": {},
            "boolean_features": [], "clamp_bounds": {}, "range_flags": {},
            "include_timing": false, "label_map": {}, "label_unmap": []
        }))
        .unwrap();
        ProcessedDataset {
            n_features: 1,
            matrix: (0..labels.len()).map(|i| i as f64).collect(),
            labels,
            manifest,
        }
    }

    #[test]
    fn partition() {
        let meta = build_meta_dataset(&dataset(vec![0, 1, 0, 1])).unwrap();
        assert_eq!(meta.class_index, BTreeMap::from([(0, vec![0, 2]), (1, vec![1, 3])]));
        assert_eq!(build_meta_dataset(&dataset(vec![0, 0])).unwrap_err(), TaskError::TooFewClasses(1));
    }

    #[test]
    fn two_way_two_shot_layout() {
        let meta = build_meta_dataset(&dataset(vec![0, 0, 0, 1, 1, 1, 2, 2, 2])).unwrap();
        let cfg = TaskConfig {
            n_ways: 2,
            k_shots: 2,
            m_tasks: 1,
            task_size: 6,
        };
        let t = sample_task(&meta, &cfg, &mut seed::rng(1)).unwrap();
        assert_eq!(t.adapt_rows.len(), 4);
        assert_eq!(t.adapt_labels.iter().filter(|l| **l == 0).count(), 2);
        assert_eq!(t.eval_rows.len(), 2);
        assert_eq!(t, sample_task(&meta, &cfg, &mut seed::rng(1)).unwrap());
    }

    #[test]
    fn insufficient_rows() {
        let meta = build_meta_dataset(&dataset(vec![0, 1, 1, 1])).unwrap();
        let cfg = TaskConfig {
            n_ways: 2,
            k_shots: 1,
            m_tasks: 1,
            task_size: 8,
        };
        assert!(matches!(
            sample_task(&meta, &cfg, &mut seed::rng(0)),
            Err(TaskError::InsufficientRows { .. })
        ));
    }
}
