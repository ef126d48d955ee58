//! Declarative sweeps over backbones, losses and seeds: configuration,
//! scheduling, per-run manifests and checkpoints, results bundles, and
//! checks over finished bundles.
//!
//! A sweep directory looks like
//!
//! ```text
//! out/
//!   config.json          canonical config
//!   scenario.json
//!   results.json         aggregate report plus provenance
//!   results.csv
//!   table.txt
//!   cache/               synthetic dataset cache
//!   runs/<backbone>-<loss>-s<seed>/
//!     manifest.json      config, training settings, accuracy matrix, task records
//!     task<t>.json       model after task t
//! ```

mod config;
mod run;
mod verify;

pub use config::{DatasetConfig, ExperimentConfig, Preset, ScenarioConfig, TrainOverrides};
pub use run::{
    prepare, read_manifests, report, run_experiment, write_bundle, Prepared, RunKey, RunManifest, Sweep, CONFIG_FILE,
    MANIFEST_FILE, RUNS_DIR, SCENARIO_FILE,
};
pub use verify::{verify_bundle, Check, Severity, ORDERING_SLACK};
