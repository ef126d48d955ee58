//! Point-cloud datasets: ingestion, preprocessing, label mapping and the
//! per-task provider the trainer reads from.

#[cfg(feature = "hdf5")]
mod h5;
mod mapper;
mod modelnet;
mod off;
mod provider;
mod synthetic;

#[cfg(feature = "hdf5")]
pub use h5::{h5_split_files, load_h5_file, load_h5_split};
pub use mapper::LabelMapper;
pub use modelnet::{modelnet40_dataset, MODELNET40_CLASSES, OFF_POINTS_PER_MESH};
pub use off::{parse_off, sample_surface_points, Mesh};
pub use provider::{TaskDataProvider, TaskDataset};
pub use synthetic::{
    generate_synthetic_classes, load_or_generate, read_cache, sample_shape_raw, write_cache, ShapeFamily,
    SyntheticSpec, FAMILIES, SHAPE_LIBRARY_SIZE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub global_class: usize,
    pub source_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, global_class: usize, source_id: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud has no points".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("point cloud has non-finite coordinates".into()));
        }
        Ok(PointCloud {
            points,
            global_class,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `n` distinct points drawn from `rng`, or all points when the cloud
    /// already has exactly `n`.
    pub fn subsample(&self, n: usize, rng: &mut rng::Rng) -> Result<Vec<[f64; 3]>> {
        match self.points.len().cmp(&n) {
            std::cmp::Ordering::Less => Err(Error::InvalidInput(format!(
                "{} has {} points, {n} requested",
                self.source_id,
                self.points.len()
            ))),
            std::cmp::Ordering::Equal => Ok(self.points.clone()),
            std::cmp::Ordering::Greater => Ok(rng::choose_indices(rng, self.points.len(), n)
                .into_iter()
                .map(|i| self.points[i])
                .collect()),
        }
    }

    /// The fixed evaluation subsample, seeded by the source id.
    pub fn eval_points(&self, n: usize) -> Result<Vec<[f64; 3]>> {
        let mut rng = rng::derived(rng::fnv1a(self.source_id.as_bytes()), "eval-subsample", n as u64);
        self.subsample(n, &mut rng)
    }
}

/// Centres the cloud on its centroid and scales it into the unit ball.
/// A cloud whose points all coincide is only centred.
pub fn normalize_unit_sphere(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = points.len() as f64;
    let mut centroid = [0.0; 3];
    for p in points {
        for d in 0..3 {
            centroid[d] += p[d];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let centred: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]])
        .collect();
    let radius = centred
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    if radius == 0.0 {
        return centred;
    }
    centred
        .iter()
        .map(|p| [p[0] / radius, p[1] / radius, p[2] / radius])
        .collect()
}

/// A labelled collection with a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub train: Vec<PointCloud>,
    pub test: Vec<PointCloud>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[PointCloud] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Smallest point count across both splits.
    pub fn min_points(&self) -> usize {
        self.train
            .iter()
            .chain(&self.test)
            .map(PointCloud::len)
            .min()
            .unwrap_or(0)
    }
}
