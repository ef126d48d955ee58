//! HDF5 point sets: each file holds `data` (`[N, P, 3]` floats) and `label`
//! (`[N]` or `[N, 1]` integers).

use std::path::{Path, PathBuf};

use super::{PointCloud, Split};
use crate::error::{Error, Result};

const NUM_LABELS: i64 = 40;

fn load_err(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Load {
        field: field.to_string(),
        message: message.to_string(),
    }
}

pub fn load_h5_file(path: &Path) -> Result<Vec<PointCloud>> {
    let file = hdf5::File::open(path).map_err(|e| load_err("file", format!("{}: {e}", path.display())))?;
    let data = file.dataset("data").map_err(|e| load_err("data", e))?;
    let label = file.dataset("label").map_err(|e| load_err("label", e))?;

    let shape = data.shape();
    if shape.len() != 3 || shape[2] != 3 || shape[1] == 0 {
        return Err(load_err("data", format!("expected shape [N, P, 3], found {shape:?}")));
    }
    let (n, p) = (shape[0], shape[1]);
    let label_shape = label.shape();
    let label_ok = match label_shape.as_slice() {
        [m] => *m == n,
        [m, 1] => *m == n,
        _ => false,
    };
    if !label_ok {
        return Err(load_err(
            "label",
            format!("expected shape [{n}] or [{n}, 1], found {label_shape:?}"),
        ));
    }

    let coords: Vec<f32> = data.read_raw().map_err(|e| load_err("data", e))?;
    let labels: Vec<i64> = label.read_raw().map_err(|e| load_err("label", e))?;
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut clouds = Vec::with_capacity(n);
    for (row, (chunk, &y)) in coords.chunks_exact(p * 3).zip(&labels).enumerate() {
        if !(0..NUM_LABELS).contains(&y) {
            return Err(load_err(
                "label",
                format!("row {row} has label {y}, expected 0..{NUM_LABELS}"),
            ));
        }
        let points = chunk
            .chunks_exact(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        let cloud = PointCloud::new(points, y as usize, format!("{stem}#{row}"))
            .map_err(|e| load_err("data", format!("row {row}: {e}")))?;
        clouds.push(cloud);
    }
    Ok(clouds)
}

/// Files in `dir` whose names end in `.h5` and contain `_{split}`, in name order.
pub fn h5_split_files(dir: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let needle = format!("_{}", split.as_str());
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            name.ends_with(".h5") && name.contains(&needle)
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_h5_split(dir: &Path, split: Split) -> Result<Vec<PointCloud>> {
    let files = h5_split_files(dir, split)?;
    if files.is_empty() {
        return Err(load_err(
            "file",
            format!("no *_{}*.h5 files in {}", split.as_str(), dir.display()),
        ));
    }
    let mut clouds = Vec::new();
    for f in files {
        clouds.extend(load_h5_file(&f)?);
    }
    Ok(clouds)
}
