use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbones::{BackboneKind, ExtractorConfig};
use crate::data::{OFF_POINTS_PER_MESH, SHAPE_LIBRARY_SIZE};
use crate::error::{invalid_arg, Error, Result};
use crate::harness::StdKind;
use crate::losses::{ClassCount, LossKind, TaskCount};
use crate::sampler::SamplerConfig;
use crate::tensor::Reduce;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        #[serde(default = "defaults::num_classes")]
        num_classes: usize,
        #[serde(default = "defaults::samples_per_class")]
        samples_per_class: usize,
        /// Points stored per cloud; training subsamples from these.
        #[serde(default = "defaults::stored_points")]
        n_points: usize,
        #[serde(default)]
        seed: u64,
    },
    Modelnet40 {
        path: PathBuf,
        /// Surface-sampling seed for OFF meshes.
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_classes: defaults::num_classes(),
            samples_per_class: defaults::samples_per_class(),
            n_points: defaults::stored_points(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetConfig::Synthetic { num_classes, .. } => *num_classes,
            DatasetConfig::Modelnet40 { .. } => 40,
        }
    }

    fn stored_points(&self) -> usize {
        match self {
            DatasetConfig::Synthetic { n_points, .. } => *n_points,
            DatasetConfig::Modelnet40 { .. } => OFF_POINTS_PER_MESH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Fixed {
        sizes: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
    Veristic {
        tc: usize,
        low: usize,
        high: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl ScenarioConfig {
    pub fn class_count(&self) -> usize {
        match self {
            ScenarioConfig::Fixed { sizes, .. } => sizes.iter().sum(),
            ScenarioConfig::Veristic { tc, .. } => *tc,
        }
    }
}

/// Starting point for every run's [`TrainConfig`] before overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Reference,
}

/// Training settings that replace the preset's values when present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_lwf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub census_tasks: Option<TaskCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub census_classes: Option<ClassCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Reduce>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_neighbors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointnet_widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edgeconv_widths: Option<Vec<usize>>,
}

/// One sweep over backbones × losses × seeds on a single scenario.
///
/// JSON form; omitted keys take the defaults shown:
///
/// ```json
/// {
///   "dataset": {"kind": "synthetic", "num_classes": 10, "samples_per_class": 100, "n_points": 256, "seed": 0},
///   "scenario": {"kind": "fixed", "sizes": [4, 2, 2, 2], "seed": 0},
///   "backbones": ["pointnet_lite"],
///   "losses": ["joint", "ft", "lwf", "census"],
///   "seeds": [0, 1, 2],
///   "preset": "desk",
///   "train": {"epochs": 10},
///   "std": "population",
///   "workers": 1,
///   "output": "runs/out"
/// }
/// ```
///
/// A ModelNet40 sweep uses `{"kind": "modelnet40", "path": "/data/modelnet40"}`;
/// a sampled scenario uses `{"kind": "veristic", "tc": 40, "low": 3, "high": 8, "seed": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub scenario: ScenarioConfig,
    pub backbones: Vec<BackboneKind>,
    pub losses: Vec<LossKind>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub std: StdKind,
    #[serde(default = "defaults::workers")]
    pub workers: usize,
    pub output: PathBuf,
}

mod defaults {
    pub fn num_classes() -> usize {
        10
    }
    pub fn samples_per_class() -> usize {
        100
    }
    pub fn stored_points() -> usize {
        256
    }
    pub fn workers() -> usize {
        1
    }
}

impl ExperimentConfig {
    /// Synthetic data, scenario [4,2,2,2], both backbones, all four losses, seeds 0..3.
    pub fn benchmark(output: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            scenario: ScenarioConfig::Fixed {
                sizes: vec![4, 2, 2, 2],
                seed: 0,
            },
            backbones: vec![BackboneKind::PointnetLite, BackboneKind::EdgeconvLite],
            losses: LossKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            preset: Preset::Desk,
            train: TrainOverrides::default(),
            std: StdKind::Population,
            workers: 1,
            output: output.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Sorted, de-duplicated lists; everything else as given.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.backbones.sort_unstable();
        c.backbones.dedup();
        c.losses.sort_unstable();
        c.losses.dedup();
        c.seeds.sort_unstable();
        c.seeds.dedup();
        c
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical()).expect("config serializes")
    }

    /// Everything that can be checked without touching training data.
    pub fn validate(&self) -> Result<()> {
        if self.backbones.is_empty() || self.losses.is_empty() || self.seeds.is_empty() {
            return Err(invalid_arg!("backbones, losses and seeds must all be non-empty"));
        }
        if self.workers == 0 {
            return Err(invalid_arg!("workers must be at least 1"));
        }
        match &self.dataset {
            DatasetConfig::Synthetic {
                num_classes,
                samples_per_class,
                n_points,
                ..
            } => {
                if *num_classes == 0 || *num_classes > SHAPE_LIBRARY_SIZE {
                    return Err(invalid_arg!(
                        "synthetic num_classes must be in 1..={SHAPE_LIBRARY_SIZE}, got {num_classes}"
                    ));
                }
                if *samples_per_class < 2 || *n_points == 0 {
                    return Err(invalid_arg!(
                        "synthetic data needs samples_per_class >= 2 and n_points >= 1"
                    ));
                }
            }
            DatasetConfig::Modelnet40 { path, .. } => {
                if !path.is_dir() {
                    return Err(invalid_arg!("ModelNet40 root {} does not exist", path.display()));
                }
            }
        }
        let classes = self.dataset.num_classes();
        match &self.scenario {
            ScenarioConfig::Fixed { sizes, .. } => {
                if sizes.is_empty() || sizes.contains(&0) {
                    return Err(invalid_arg!(
                        "fixed scenario sizes must be non-empty and positive, got {sizes:?}"
                    ));
                }
            }
            &ScenarioConfig::Veristic { tc, low, high, seed } => SamplerConfig { tc, low, high, seed }.validate()?,
        }
        if self.scenario.class_count() > classes {
            return Err(invalid_arg!(
                "scenario needs {} classes, the dataset has {classes}",
                self.scenario.class_count()
            ));
        }
        for &kind in &self.backbones {
            for &loss in &self.losses {
                let cfg = self.train_config(kind, loss, self.seeds[0]);
                cfg.validate()?;
                if cfg.n_points > self.dataset.stored_points() {
                    return Err(invalid_arg!(
                        "training uses {} points per cloud, the dataset stores {}",
                        cfg.n_points,
                        self.dataset.stored_points()
                    ));
                }
            }
        }
        Ok(())
    }

    /// The training configuration of one run: preset, then overrides.
    pub fn train_config(&self, kind: BackboneKind, loss: LossKind, seed: u64) -> TrainConfig {
        let mut cfg = match self.preset {
            Preset::Desk => TrainConfig::desk(kind, loss),
            Preset::Reference => TrainConfig::reference(kind, loss),
        };
        cfg.seed = seed;
        let o = &self.train;
        if let Some(v) = o.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = o.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = o.lr {
            cfg.lr = v;
        }
        if let Some(v) = o.n_points {
            cfg.n_points = v;
        }
        if let Some(v) = o.tau {
            cfg.loss.tau = v;
        }
        if let Some(v) = o.lambda_lwf {
            cfg.loss.lambda_lwf = v;
        }
        if let Some(v) = o.census_tasks {
            cfg.loss.census_tasks = v;
        }
        if let Some(v) = o.census_classes {
            cfg.loss.census_classes = v;
        }
        let ext: &mut ExtractorConfig = &mut cfg.extractor;
        if let Some(v) = o.aggregation {
            ext.aggregation = v;
        }
        if let Some(v) = o.k_neighbors {
            ext.k_neighbors = v;
        }
        let widths = match kind {
            BackboneKind::PointnetLite => &o.pointnet_widths,
            BackboneKind::EdgeconvLite => &o.edgeconv_widths,
        };
        if let Some(w) = widths {
            ext.widths = w.clone();
        }
        cfg
    }
}
