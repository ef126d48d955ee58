//! ModelNet40 from either of its two common packagings: a directory of
//! `*_train*.h5` / `*_test*.h5` point sets, or the mesh tree
//! `<root>/<class>/{train,test}/*.off`. HDF5 wins when both are present.

use std::path::Path;

use super::{normalize_unit_sphere, parse_off, sample_surface_points, Dataset, PointCloud, Split};
use crate::error::{Error, Result};
use crate::rng;

pub const MODELNET40_CLASSES: [&str; 40] = [
    "airplane",
    "bathtub",
    "bed",
    "bench",
    "bookshelf",
    "bottle",
    "bowl",
    "car",
    "chair",
    "cone",
    "cup",
    "curtain",
    "desk",
    "door",
    "dresser",
    "flower_pot",
    "glass_box",
    "guitar",
    "keyboard",
    "lamp",
    "laptop",
    "mantel",
    "monitor",
    "night_stand",
    "person",
    "piano",
    "plant",
    "radio",
    "range_hood",
    "sink",
    "sofa",
    "stairs",
    "stool",
    "table",
    "tent",
    "toilet",
    "tv_stand",
    "vase",
    "wardrobe",
    "xbox",
];

/// Points sampled per mesh when reading the OFF tree, matching the HDF5 packaging.
pub const OFF_POINTS_PER_MESH: usize = 2048;

#[cfg(feature = "hdf5")]
fn has_h5(root: &Path) -> bool {
    super::h5::h5_split_files(root, Split::Train)
        .map(|f| !f.is_empty())
        .unwrap_or(false)
}

fn load_off_split(root: &Path, split: Split, seed: u64) -> Result<Vec<PointCloud>> {
    let mut clouds = Vec::new();
    for (class, name) in MODELNET40_CLASSES.iter().enumerate() {
        let dir = root.join(name).join(split.as_str());
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "off"))
            .collect();
        files.sort();
        for path in files {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let mesh = parse_off(&bytes).map_err(|e| Error::Load {
                field: path.display().to_string(),
                message: e.to_string(),
            })?;
            let id = format!(
                "{name}/{}/{}",
                split.as_str(),
                path.file_name().unwrap_or_default().to_string_lossy()
            );
            let sample_seed = rng::derive_seed(seed, "off-surface", rng::fnv1a(id.as_bytes()));
            let pts = sample_surface_points(&mesh, OFF_POINTS_PER_MESH, sample_seed)?;
            let points: Vec<[f64; 3]> = pts.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            clouds.push(PointCloud::new(normalize_unit_sphere(&points), class, id)?);
        }
    }
    Ok(clouds)
}

fn normalized(clouds: Vec<PointCloud>) -> Vec<PointCloud> {
    clouds
        .into_iter()
        .map(|c| PointCloud {
            points: normalize_unit_sphere(&c.points),
            ..c
        })
        .collect()
}

/// Loads both splits from `root`. `seed` only affects surface sampling of OFF meshes.
pub fn modelnet40_dataset(root: &Path, seed: u64) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Load {
            field: "root".into(),
            message: format!("{} is not a directory", root.display()),
        });
    }
    #[cfg(feature = "hdf5")]
    if has_h5(root) {
        return Ok(Dataset {
            name: "modelnet40".into(),
            num_classes: 40,
            train: normalized(super::h5::load_h5_split(root, Split::Train)?),
            test: normalized(super::h5::load_h5_split(root, Split::Test)?),
        });
    }
    let train = load_off_split(root, Split::Train, seed)?;
    let test = load_off_split(root, Split::Test, seed)?;
    if train.is_empty() {
        return Err(Error::Load {
            field: "root".into(),
            message: format!("no HDF5 files or OFF class folders under {}", root.display()),
        });
    }
    Ok(Dataset {
        name: "modelnet40".into(),
        num_classes: 40,
        train,
        test,
    })
}
