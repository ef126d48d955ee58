use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig, ScenarioConfig};
use crate::backbones::BackboneKind;
use crate::data::{load_or_generate, modelnet40_dataset, Dataset, SyntheticSpec, TaskDataProvider};
use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::harness::{aggregate, emit, evaluate_union, AccuracyMatrix, AggregateReport, RunResult};
use crate::io::write_atomic;
use crate::losses::LossKind;
use crate::sampler::{build_scenario, fixed_scenario, SamplerConfig, Scenario};
use crate::trainer::{advance_task, train_base, train_joint, TaskRecord, TrainConfig};

/// Identity of one run in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub backbone: BackboneKind,
    pub loss: LossKind,
    pub seed: u64,
}

impl RunKey {
    pub fn dir_name(&self) -> String {
        format!("{}-{}-s{}", self.backbone, self.loss, self.seed)
    }
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} + {} (seed {})", self.backbone, self.loss, self.seed)
    }
}

/// Everything recorded about one finished run, written as `manifest.json`
/// in the run's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub key: RunKey,
    pub config: ExperimentConfig,
    pub train: TrainConfig,
    pub scenario: Scenario,
    pub matrix: AccuracyMatrix,
    /// Incremental runs only; empty for the joint bound.
    pub records: Vec<TaskRecord>,
    /// Training reads of earlier tasks' samples while task `t` trained.
    /// Incremental runs must record zeros.
    pub prior_task_reads: Vec<usize>,
    /// File names of the per-task checkpoints, relative to the run directory.
    pub checkpoints: Vec<String>,
}

impl RunManifest {
    pub fn result(&self) -> RunResult {
        RunResult {
            backbone: self.key.backbone,
            loss: self.key.loss,
            seed: self.key.seed,
            matrix: self.matrix.clone(),
        }
    }
}

pub const CONFIG_FILE: &str = "config.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const RUNS_DIR: &str = "runs";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A config whose dataset is loaded and whose scenario is fixed.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub dataset: Arc<Dataset>,
    pub scenario: Scenario,
}

/// Validates `config`, loads the dataset and builds the scenario. Nothing is trained.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let config = config.canonical();
    config.validate()?;
    let dataset = match &config.dataset {
        &DatasetConfig::Synthetic {
            num_classes,
            samples_per_class,
            n_points,
            seed,
        } => {
            let spec = SyntheticSpec {
                num_classes,
                samples_per_class,
                n_points,
                seed,
            };
            load_or_generate(&config.output.join("cache"), &spec)?.0
        }
        DatasetConfig::Modelnet40 { path, seed } => modelnet40_dataset(path, *seed)?,
    };
    let scenario = match &config.scenario {
        ScenarioConfig::Fixed { sizes, seed } => fixed_scenario(sizes, dataset.num_classes, *seed)?,
        &ScenarioConfig::Veristic { tc, low, high, seed } => build_scenario(&SamplerConfig { tc, low, high, seed })?,
    };
    let dataset = Arc::new(dataset);
    TaskDataProvider::new(Arc::clone(&dataset), scenario.clone())?;
    Ok(Prepared {
        config,
        dataset,
        scenario,
    })
}

impl Prepared {
    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &backbone in &self.config.backbones {
            for &loss in &self.config.losses {
                for &seed in &self.config.seeds {
                    keys.push(RunKey { backbone, loss, seed });
                }
            }
        }
        keys
    }

    pub fn run_dir(&self, key: &RunKey) -> PathBuf {
        self.config.output.join(RUNS_DIR).join(key.dir_name())
    }

    /// Trains and evaluates one run, writing its checkpoints and manifest.
    pub fn run_one(&self, key: RunKey) -> Result<RunManifest> {
        let train = self.config.train_config(key.backbone, key.loss, key.seed);
        // Each run gets its own provider so the read audit sees only its own traffic.
        let provider = TaskDataProvider::new(Arc::clone(&self.dataset), self.scenario.clone())?;
        let dir = self.run_dir(&key);
        let batch = train.batch_size;
        let mut rows = Vec::new();
        let mut checkpoints = Vec::new();
        let mut prior_task_reads = Vec::new();
        let mut records = Vec::new();

        let mut save = |t: usize, model: &crate::backbones::ModelState| -> Result<()> {
            let name = format!("task{t}.json");
            write_atomic(&dir.join(&name), model.to_json().as_bytes())?;
            checkpoints.push(name);
            Ok(())
        };

        if key.loss == LossKind::Joint {
            for t in 0..provider.num_tasks() {
                let pooled = provider.pooled(t)?;
                let model = train_joint(&pooled, &train)?;
                rows.push(evaluate_union(&model, &pooled, train.n_points, batch)?);
                save(t, &model)?;
            }
        } else {
            let mut state = None;
            for t in 0..provider.num_tasks() {
                let before = provider.train_reads();
                let task = provider.task(t)?;
                let next = match state.take() {
                    None => train_base(&task, &train)?,
                    Some(s) => advance_task(s, &task, &train)?,
                };
                let after = provider.train_reads();
                let foreign: usize = (0..t).map(|j| after[j] - before[j]).sum();
                if foreign != 0 {
                    return Err(invalid_state!(
                        "task {t} training read {foreign} samples of earlier tasks"
                    ));
                }
                prior_task_reads.push(foreign);
                rows.push(evaluate_union(
                    &next.student,
                    &provider.pooled(t)?,
                    train.n_points,
                    batch,
                )?);
                save(t, &next.student)?;
                state = Some(next);
            }
            records = state.map(|s| s.records).unwrap_or_default();
        }

        let manifest = RunManifest {
            key,
            config: self.config.clone(),
            train,
            scenario: self.scenario.clone(),
            matrix: AccuracyMatrix { rows },
            records,
            prior_task_reads,
            checkpoints,
        };
        write_atomic(
            &dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )?;
        Ok(manifest)
    }
}

/// Outcome of a sweep. `failures` holds every run that did not finish.
pub struct Sweep {
    pub prepared: Prepared,
    pub manifests: Vec<RunManifest>,
    pub failures: Vec<(RunKey, Error)>,
}

/// Runs every (backbone, loss, seed) on a pool of `config.workers` threads,
/// then writes the results bundle if all of them finished. `progress` is
/// called from the worker as each run ends.
pub fn run_experiment<F>(config: &ExperimentConfig, progress: F) -> Result<Sweep>
where
    F: Fn(RunKey, std::result::Result<&RunManifest, &Error>) + Sync,
{
    let prepared = prepare(config)?;
    let out = &prepared.config.output;
    write_atomic(&out.join(CONFIG_FILE), prepared.config.to_canonical_json().as_bytes())?;
    write_atomic(&out.join(SCENARIO_FILE), prepared.scenario.to_json().as_bytes())?;

    let keys = prepared.keys();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunManifest>>>> = Mutex::new((0..keys.len()).map(|_| None).collect());
    let workers = prepared.config.workers.min(keys.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&key) = keys.get(i) else { break };
                let outcome = prepared.run_one(key);
                progress(key, outcome.as_ref());
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });

    let mut manifests = Vec::new();
    let mut failures = Vec::new();
    for (key, slot) in keys.iter().zip(slots.into_inner().expect("workers joined")) {
        match slot.expect("every job ran") {
            Ok(m) => manifests.push(m),
            Err(e) => failures.push((*key, e)),
        }
    }
    if failures.is_empty() {
        write_bundle(&prepared.config, &prepared.scenario, &manifests)?;
    }
    Ok(Sweep {
        prepared,
        manifests,
        failures,
    })
}

/// Aggregates `manifests` and writes `results.json`, `results.csv` and `table.txt`.
pub fn write_bundle(
    config: &ExperimentConfig,
    scenario: &Scenario,
    manifests: &[RunManifest],
) -> Result<AggregateReport> {
    let results: Vec<RunResult> = manifests.iter().map(RunManifest::result).collect();
    let report = aggregate(&results, scenario, config.std)?;
    emit(&report, &provenance(config, manifests)?, &config.output)?;
    Ok(report)
}

/// The canonical config minus its output location and worker count, plus each run's training
/// settings. Contains nothing that varies between identical executions.
fn provenance(config: &ExperimentConfig, manifests: &[RunManifest]) -> Result<serde_json::Value> {
    let mut cfg = serde_json::to_value(config.canonical())?;
    if let Some(obj) = cfg.as_object_mut() {
        obj.remove("output");
        obj.remove("workers");
    }
    let mut sorted: Vec<&RunManifest> = manifests.iter().collect();
    sorted.sort_by_key(|m| m.key);
    let runs: Vec<serde_json::Value> = sorted
        .iter()
        .map(|m| serde_json::json!({"run": m.key.dir_name(), "train": m.train}))
        .collect();
    Ok(serde_json::json!({"config": cfg, "runs": runs}))
}

/// Reads every run manifest under `dir/runs`, sorted by run key.
pub fn read_manifests(dir: &Path) -> Result<Vec<RunManifest>> {
    let runs = dir.join(RUNS_DIR);
    let entries = std::fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))?;
    let mut manifests = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&runs, e))?.path().join(MANIFEST_FILE);
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            manifests.push(serde_json::from_str::<RunManifest>(&text)?);
        }
    }
    manifests.sort_by_key(|m| m.key);
    Ok(manifests)
}

/// Re-aggregates the run directories of an earlier sweep in `dir` and
/// rewrites its results bundle there.
pub fn report(dir: &Path) -> Result<AggregateReport> {
    let mut config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    config.output = dir.to_path_buf();
    let scenario_path = dir.join(SCENARIO_FILE);
    let text = std::fs::read_to_string(&scenario_path).map_err(|e| Error::io(&scenario_path, e))?;
    let scenario = Scenario::from_json(&text)?;
    let manifests = read_manifests(dir)?;
    if manifests.is_empty() {
        return Err(invalid_arg!("no finished runs under {}", dir.join(RUNS_DIR).display()));
    }
    if let Some(m) = manifests.iter().find(|m| m.scenario != scenario) {
        return Err(invalid_arg!("{} was trained on a different scenario", m.key));
    }
    write_bundle(&config, &scenario, &manifests)
}
