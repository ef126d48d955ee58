//! Parametric shape families standing in for ModelNet40 in tests and CI.
//!
//! Class `c` is family `c % 10` stretched along z by variant `c / 10`. Every
//! sample gets its own anisotropic scale in `[0.8, 1.2]` per axis, a random
//! rotation about z, Gaussian jitter with sigma 0.01, and is then normalized
//! into the unit ball.
//!
//! Cache files (`synthetic-s{seed}-c{classes}-n{samples}-p{points}.bin`) are
//! little-endian:
//!
//! ```text
//! magic              8 bytes  "PCLBSYN1"
//! num_classes        u32
//! samples_per_class  u32
//! n_points           u32
//! seed               u64
//! train_count        u32
//! test_count         u32
//! clouds, train then test:
//!   class            u32
//!   sample_index     u32
//!   points           n_points * 3 f64 (x, y, z per point)
//! ```

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use super::{normalize_unit_sphere, Dataset, PointCloud};
use crate::error::{invalid_arg, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    Plane,
    Helix,
    Cross,
    LBracket,
    Ellipsoid,
}

pub const FAMILIES: [ShapeFamily; 10] = [
    ShapeFamily::Sphere,
    ShapeFamily::Cube,
    ShapeFamily::Cylinder,
    ShapeFamily::Cone,
    ShapeFamily::Torus,
    ShapeFamily::Plane,
    ShapeFamily::Helix,
    ShapeFamily::Cross,
    ShapeFamily::LBracket,
    ShapeFamily::Ellipsoid,
];

const VARIANT_STRETCH: [f64; 4] = [1.0, 2.5, 0.4, 6.0];

pub const SHAPE_LIBRARY_SIZE: usize = FAMILIES.len() * VARIANT_STRETCH.len();

const JITTER_SIGMA: f64 = 0.01;
const MAGIC: &[u8; 8] = b"PCLBSYN1";

impl ShapeFamily {
    fn point(self, rng: &mut Rng) -> [f64; 3] {
        let u = |rng: &mut Rng| rng::uniform(rng);
        let sym = |rng: &mut Rng| rng::uniform_in(rng, -1.0, 1.0);
        match self {
            ShapeFamily::Sphere => unit_sphere(rng),
            ShapeFamily::Ellipsoid => {
                let p = unit_sphere(rng);
                [p[0], 0.5 * p[1], 0.25 * p[2]]
            }
            ShapeFamily::Cube => {
                let face = rng::randint(rng, 0, 5);
                let sign = if face.is_multiple_of(2) { 1.0 } else { -1.0 };
                let (a, b) = (sym(rng), sym(rng));
                match face / 2 {
                    0 => [sign, a, b],
                    1 => [a, sign, b],
                    _ => [a, b, sign],
                }
            }
            ShapeFamily::Cylinder => {
                let theta = TAU * u(rng);
                // lateral area 4pi against 2pi for the two caps
                if u(rng) < 2.0 / 3.0 {
                    [theta.cos(), theta.sin(), sym(rng)]
                } else {
                    let r = u(rng).sqrt();
                    let z = if u(rng) < 0.5 { 1.0 } else { -1.0 };
                    [r * theta.cos(), r * theta.sin(), z]
                }
            }
            ShapeFamily::Cone => {
                let theta = TAU * u(rng);
                let slant = 5f64.sqrt();
                if u(rng) < slant / (slant + 1.0) {
                    let t = u(rng).sqrt();
                    [t * theta.cos(), t * theta.sin(), 1.0 - 2.0 * t]
                } else {
                    let r = u(rng).sqrt();
                    [r * theta.cos(), r * theta.sin(), -1.0]
                }
            }
            ShapeFamily::Torus => {
                let (major, minor) = (1.0, 0.35);
                let tube = loop {
                    let a = TAU * u(rng);
                    if u(rng) * (major + minor) <= major + minor * a.cos() {
                        break a;
                    }
                };
                let phi = TAU * u(rng);
                let ring = major + minor * tube.cos();
                [ring * phi.cos(), ring * phi.sin(), minor * tube.sin()]
            }
            ShapeFamily::Plane => [sym(rng), 0.0, sym(rng)],
            ShapeFamily::Helix => {
                let t = u(rng);
                let angle = 3.0 * TAU * t;
                let tube = 0.05;
                [
                    angle.cos() + tube * rng::gaussian(rng),
                    angle.sin() + tube * rng::gaussian(rng),
                    2.0 * t - 1.0 + tube * rng::gaussian(rng),
                ]
            }
            ShapeFamily::Cross => {
                let bar = rng::randint(rng, 0, 2);
                let half = 0.15;
                let mut p = [
                    rng::uniform_in(rng, -half, half),
                    rng::uniform_in(rng, -half, half),
                    rng::uniform_in(rng, -half, half),
                ];
                p[bar] = sym(rng);
                p
            }
            ShapeFamily::LBracket => {
                let y = rng::uniform_in(rng, -0.5, 0.5);
                if u(rng) < 0.5 {
                    [sym(rng), y, -1.0]
                } else {
                    [-1.0, y, sym(rng)]
                }
            }
        }
    }
}

fn unit_sphere(rng: &mut Rng) -> [f64; 3] {
    loop {
        let p = [rng::gaussian(rng), rng::gaussian(rng), rng::gaussian(rng)];
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if n > 1e-12 {
            return [p[0] / n, p[1] / n, p[2] / n];
        }
    }
}

fn family_and_stretch(class: usize) -> Result<(ShapeFamily, f64)> {
    if class >= SHAPE_LIBRARY_SIZE {
        return Err(invalid_arg!(
            "class {class} exceeds the {SHAPE_LIBRARY_SIZE}-shape library"
        ));
    }
    Ok((
        FAMILIES[class % FAMILIES.len()],
        VARIANT_STRETCH[class / FAMILIES.len()],
    ))
}

/// One sample of `class` before normalization: stretched, scaled, rotated and jittered.
pub fn sample_shape_raw(class: usize, n_points: usize, rng: &mut Rng) -> Result<Vec<[f64; 3]>> {
    let (family, stretch) = family_and_stretch(class)?;
    let scale = [
        rng::uniform_in(rng, 0.8, 1.2),
        rng::uniform_in(rng, 0.8, 1.2),
        rng::uniform_in(rng, 0.8, 1.2),
    ];
    let angle = rng::uniform_in(rng, 0.0, 2.0 * PI);
    let (sin, cos) = angle.sin_cos();
    Ok((0..n_points)
        .map(|_| {
            let p = family.point(rng);
            let (x, y, z) = (p[0] * scale[0], p[1] * scale[1], p[2] * stretch * scale[2]);
            [
                cos * x - sin * y + JITTER_SIGMA * rng::gaussian(rng),
                sin * x + cos * y + JITTER_SIGMA * rng::gaussian(rng),
                z + JITTER_SIGMA * rng::gaussian(rng),
            ]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub n_points: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > SHAPE_LIBRARY_SIZE {
            return Err(invalid_arg!(
                "synthetic datasets support 1..={SHAPE_LIBRARY_SIZE} classes, got {}",
                self.num_classes
            ));
        }
        if self.samples_per_class < 2 {
            return Err(invalid_arg!("need at least 2 samples per class for a train/test split"));
        }
        if self.n_points == 0 {
            return Err(invalid_arg!("n_points must be positive"));
        }
        Ok(())
    }

    fn train_per_class(&self) -> usize {
        ((self.samples_per_class as f64 * 0.8).round() as usize).clamp(1, self.samples_per_class - 1)
    }

    pub fn cache_file_name(&self) -> String {
        format!(
            "synthetic-s{}-c{}-n{}-p{}.bin",
            self.seed, self.num_classes, self.samples_per_class, self.n_points
        )
    }
}

fn source_id(class: usize, index: usize) -> String {
    format!("synthetic/c{class}/s{index}")
}

fn make_cloud(spec: &SyntheticSpec, class: usize, index: usize) -> Result<PointCloud> {
    let mut rng = rng::derived(spec.seed, "synthetic", ((class as u64) << 32) | index as u64);
    let raw = sample_shape_raw(class, spec.n_points, &mut rng)?;
    PointCloud::new(normalize_unit_sphere(&raw), class, source_id(class, index))
}

/// Generates `num_classes` classes with an 80/20 train/test split per class.
pub fn generate_synthetic_classes(
    num_classes: usize,
    samples_per_class: usize,
    n_points: usize,
    seed: u64,
) -> Result<Dataset> {
    let spec = SyntheticSpec {
        num_classes,
        samples_per_class,
        n_points,
        seed,
    };
    spec.validate()?;
    let n_train = spec.train_per_class();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..num_classes {
        for index in 0..samples_per_class {
            let cloud = make_cloud(&spec, class, index)?;
            if index < n_train {
                train.push(cloud);
            } else {
                test.push(cloud);
            }
        }
    }
    Ok(Dataset {
        name: "synthetic".into(),
        num_classes,
        train,
        test,
    })
}

pub fn write_cache(path: &Path, spec: &SyntheticSpec, dataset: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [spec.num_classes, spec.samples_per_class, spec.n_points] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&spec.seed.to_le_bytes());
    buf.extend_from_slice(&(dataset.train.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dataset.test.len() as u32).to_le_bytes());
    for cloud in dataset.train.iter().chain(&dataset.test) {
        let index: u32 = cloud
            .source_id
            .rsplit_once("/s")
            .and_then(|(_, i)| i.parse().ok())
            .ok_or_else(|| invalid_arg!("{} is not a synthetic sample", cloud.source_id))?;
        if cloud.len() != spec.n_points {
            return Err(invalid_arg!(
                "{} has {} points, spec says {}",
                cloud.source_id,
                cloud.len(),
                spec.n_points
            ));
        }
        buf.extend_from_slice(&(cloud.global_class as u32).to_le_bytes());
        buf.extend_from_slice(&index.to_le_bytes());
        for p in &cloud.points {
            for c in p {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    crate::io::write_atomic(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            offset: self.pos,
            message: "synthetic cache is truncated".into(),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_cache(path: &Path) -> Result<(SyntheticSpec, Dataset)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a synthetic dataset cache".into(),
        });
    }
    let spec = SyntheticSpec {
        num_classes: r.u32()?,
        samples_per_class: r.u32()?,
        n_points: r.u32()?,
        seed: r.u64()?,
    };
    let (n_train, n_test) = (r.u32()?, r.u32()?);
    let mut clouds = Vec::with_capacity(n_train + n_test);
    for _ in 0..n_train + n_test {
        let class = r.u32()?;
        let index = r.u32()?;
        let mut points = Vec::with_capacity(spec.n_points);
        for _ in 0..spec.n_points {
            points.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        clouds.push(PointCloud::new(points, class, source_id(class, index))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: "trailing bytes after synthetic cache".into(),
        });
    }
    let test = clouds.split_off(n_train);
    Ok((
        spec,
        Dataset {
            name: "synthetic".into(),
            num_classes: spec.num_classes,
            train: clouds,
            test,
        },
    ))
}

/// Reads the cached dataset for `spec` from `dir`, generating and caching it when absent.
pub fn load_or_generate(dir: &Path, spec: &SyntheticSpec) -> Result<(Dataset, PathBuf)> {
    let path = dir.join(spec.cache_file_name());
    if path.exists() {
        let (cached, dataset) = read_cache(&path)?;
        if cached == *spec {
            return Ok((dataset, path));
        }
    }
    let dataset = generate_synthetic_classes(spec.num_classes, spec.samples_per_class, spec.n_points, spec.seed)?;
    write_cache(&path, spec, &dataset)?;
    Ok((dataset, path))
}
