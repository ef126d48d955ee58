//! Desk-scale feature extractors and the expandable linear classifier.
//!
//! Batches of `B` clouds with `n` points each are stacked into one
//! `[B*n, 3]` matrix; per-point MLPs run on the stacked rows and
//! [`Tape::reduce_groups`] aggregates each cloud back to one row.

mod knn;

pub use knn::knn;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::rng;
use crate::tensor::{Reduce, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    PointnetLite,
    EdgeconvLite,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::PointnetLite => "pointnet_lite",
            BackboneKind::EdgeconvLite => "edgeconv_lite",
        }
    }

    pub fn default_widths(self) -> Vec<usize> {
        match self {
            BackboneKind::PointnetLite => vec![64, 128, 256],
            BackboneKind::EdgeconvLite => vec![64, 128],
        }
    }

    fn input_dim(self) -> usize {
        match self {
            BackboneKind::PointnetLite => 3,
            BackboneKind::EdgeconvLite => 6,
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointnet_lite" => Ok(BackboneKind::PointnetLite),
            "edgeconv_lite" => Ok(BackboneKind::EdgeconvLite),
            other => Err(invalid_arg!("unknown backbone {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub kind: BackboneKind,
    pub widths: Vec<usize>,
    pub aggregation: Reduce,
    /// Used by `edgeconv_lite` only.
    pub k_neighbors: usize,
}

impl ExtractorConfig {
    pub fn new(kind: BackboneKind) -> Self {
        ExtractorConfig {
            kind,
            widths: kind.default_widths(),
            aggregation: Reduce::Max,
            k_neighbors: 8,
        }
    }

    /// Every layer width halved.
    pub fn halved(mut self) -> Self {
        self.widths.iter_mut().for_each(|w| *w = (*w / 2).max(1));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(invalid_arg!(
                "layer widths must be non-empty and positive, got {:?}",
                self.widths
            ));
        }
        if self.kind == BackboneKind::EdgeconvLite && self.k_neighbors == 0 {
            return Err(invalid_arg!("k_neighbors must be positive"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// The shared per-point (or per-edge) MLP plus its aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: ExtractorConfig,
    pub layers: Vec<Layer>,
    pub init_seed: u64,
}

/// Tape handles for one model's parameters, in [`ModelState::params`] order.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl FeatureExtractor {
    /// He-uniform weights and zero biases.
    pub fn new(config: ExtractorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut fan_in = config.kind.input_dim();
        let mut layers = Vec::with_capacity(config.widths.len());
        for (l, &width) in config.widths.iter().enumerate() {
            let mut r = rng::derived(seed, "extractor-layer", l as u64);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = (0..fan_in * width)
                .map(|_| rng::uniform_in(&mut r, -bound, bound))
                .collect();
            layers.push(Layer {
                weight: Tensor::matrix(fan_in, width, w)?,
                bias: Tensor::zeros(vec![width])?,
            });
            fan_in = width;
        }
        Ok(FeatureExtractor {
            config,
            layers,
            init_seed: seed,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    fn mlp(&self, tape: &mut Tape, vars: &[Var], mut x: Var) -> Result<Var> {
        for pair in vars.chunks_exact(2) {
            let h = tape.matmul(x, pair[0])?;
            let h = tape.add_row(h, pair[1])?;
            x = tape.relu(h)?;
        }
        Ok(x)
    }

    /// Global features `[B, F]` for a batch of clouds that share a point count.
    /// `vars` are this extractor's weight/bias handles in layer order.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], clouds: &[Vec<[f64; 3]>]) -> Result<Var> {
        let Some(first) = clouds.first() else {
            return Err(invalid_arg!("empty batch"));
        };
        let n = first.len();
        if n == 0 {
            return Err(invalid_arg!("point cloud has no points"));
        }
        if clouds.iter().any(|c| c.len() != n) {
            return Err(invalid_arg!("clouds in a batch must share a point count"));
        }
        if vars.len() != 2 * self.layers.len() {
            return Err(invalid_arg!(
                "expected {} parameter handles, got {}",
                2 * self.layers.len(),
                vars.len()
            ));
        }
        let stacked: Vec<f64> = clouds.iter().flatten().flatten().copied().collect();
        let x = tape.constant(&Tensor::matrix(clouds.len() * n, 3, stacked)?);
        let per_point = match self.config.kind {
            BackboneKind::PointnetLite => self.mlp(tape, vars, x)?,
            BackboneKind::EdgeconvLite => {
                let k = self.config.k_neighbors;
                if n <= k {
                    return Err(invalid_arg!("edgeconv_lite needs more than k={k} points, got {n}"));
                }
                let mut centre = Vec::with_capacity(clouds.len() * n * k);
                let mut neighbour = Vec::with_capacity(clouds.len() * n * k);
                for (b, cloud) in clouds.iter().enumerate() {
                    for (i, nbrs) in knn(cloud, k)?.into_iter().enumerate() {
                        for j in nbrs {
                            centre.push(b * n + i);
                            neighbour.push(b * n + j);
                        }
                    }
                }
                let xi = tape.gather_rows(x, &centre)?;
                let xj = tape.gather_rows(x, &neighbour)?;
                let offset = tape.sub(xj, xi)?;
                let edges = tape.concat_cols(xi, offset)?;
                let h = self.mlp(tape, vars, edges)?;
                tape.reduce_groups(h, k, Reduce::Max)?
            }
        };
        tape.reduce_groups(per_point, n, self.config.aggregation)
    }

    fn single(&self, kind: BackboneKind, points: &Tensor) -> Result<Tensor> {
        if self.config.kind != kind {
            return Err(invalid_arg!("extractor is {}, not {kind}", self.config.kind));
        }
        let cloud = tensor_points(points)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .layers
            .iter()
            .flat_map(|l| [tape.constant(&l.weight), tape.constant(&l.bias)])
            .collect();
        let out = self.forward(&mut tape, &vars, &[cloud])?;
        Tensor::vector(tape.value(out).to_vec())
    }
}

fn tensor_points(points: &Tensor) -> Result<Vec<[f64; 3]>> {
    match points.shape() {
        [_, 3] => Ok(points.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()),
        other => Err(invalid_arg!("points must have shape [n, 3], got {other:?}")),
    }
}

/// Global feature `[F]` of one `[n, 3]` cloud.
pub fn pointnet_lite_forward(points: &Tensor, extractor: &FeatureExtractor) -> Result<Tensor> {
    extractor.single(BackboneKind::PointnetLite, points)
}

/// Global feature `[F]` of one `[n, 3]` cloud; needs `n > k_neighbors`.
pub fn edgeconv_lite_forward(points: &Tensor, extractor: &FeatureExtractor) -> Result<Tensor> {
    extractor.single(BackboneKind::EdgeconvLite, points)
}

/// Linear classifier with one column per global class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    /// `[F, M]`
    pub weight: Tensor,
    /// `[M]`
    pub bias: Tensor,
    pub class_slots: Vec<usize>,
    /// Seed each column was drawn from.
    pub column_seeds: Vec<u64>,
}

fn column_seed(init_seed: u64, class: usize) -> u64 {
    rng::derive_seed(init_seed, "head-column", class as u64)
}

impl ClassifierHead {
    /// A head over `classes`, columns drawn as in [`expand_head`].
    pub fn new(feature_dim: usize, classes: &[usize], init_seed: u64) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid_arg!("a head needs at least one class"));
        }
        build_head(feature_dim, &[], &[], &[], &[], classes, init_seed)
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.class_slots.len()
    }

    /// Logits `[B, M]` for features `[B, F]`.
    pub fn forward(&self, tape: &mut Tape, weight: Var, bias: Var, features: Var) -> Result<Var> {
        let h = tape.matmul(features, weight)?;
        tape.add_row(h, bias)
    }
}

fn build_head(
    f: usize,
    old_weight: &[f64],
    old_bias: &[f64],
    old_slots: &[usize],
    old_seeds: &[u64],
    new_classes: &[usize],
    init_seed: u64,
) -> Result<ClassifierHead> {
    let mut seen: std::collections::HashSet<usize> = old_slots.iter().copied().collect();
    for &c in new_classes {
        if !seen.insert(c) {
            return Err(invalid_arg!("class {c} already has a head column"));
        }
    }
    let (m_old, m_new) = (old_slots.len(), new_classes.len());
    let m = m_old + m_new;
    let bound = 1.0 / (f as f64).sqrt();
    let seeds: Vec<u64> = new_classes.iter().map(|&c| column_seed(init_seed, c)).collect();
    let columns: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| {
            let mut r = rng::rng(s);
            (0..f).map(|_| rng::uniform_in(&mut r, -bound, bound)).collect()
        })
        .collect();
    let mut weight = Vec::with_capacity(f * m);
    for row in 0..f {
        weight.extend_from_slice(&old_weight[row * m_old..(row + 1) * m_old]);
        weight.extend(columns.iter().map(|col| col[row]));
    }
    let mut bias = old_bias.to_vec();
    bias.resize(m, 0.0);
    Ok(ClassifierHead {
        weight: Tensor::matrix(f, m, weight)?,
        bias: Tensor::vector(bias)?,
        class_slots: old_slots.iter().chain(new_classes).copied().collect(),
        column_seeds: old_seeds.iter().copied().chain(seeds).collect(),
    })
}

/// Appends one column per new class. Existing columns and biases are copied
/// bit for bit; each new column is uniform in `±1/sqrt(F)` from a seed derived
/// from `init_seed` and its class id, so expansion order does not matter.
pub fn expand_head(head: &ClassifierHead, new_class_ids: &[usize], init_seed: u64) -> Result<ClassifierHead> {
    if new_class_ids.is_empty() {
        return Ok(head.clone());
    }
    build_head(
        head.feature_dim(),
        head.weight.data(),
        head.bias.data(),
        &head.class_slots,
        &head.column_seeds,
        new_class_ids,
        init_seed,
    )
}

/// `Vᵀ·feature + bias`.
pub fn head_forward(feature: &Tensor, head: &ClassifierHead) -> Result<Tensor> {
    let f = head.feature_dim();
    if feature.shape() != [f] {
        return Err(invalid_arg!(
            "feature has shape {:?}, head expects [{f}]",
            feature.shape()
        ));
    }
    let m = head.num_classes();
    let w = head.weight.data();
    let mut out = head.bias.data().to_vec();
    for (row, &x) in feature.data().iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(&w[row * m..(row + 1) * m]) {
            *o += x * v;
        }
    }
    Tensor::vector(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub extractor: FeatureExtractor,
    pub head: ClassifierHead,
    pub role: Role,
    pub frozen: bool,
}

impl ModelState {
    /// A fresh student over `classes`.
    pub fn new(config: ExtractorConfig, classes: &[usize], seed: u64) -> Result<Self> {
        let extractor = FeatureExtractor::new(config, rng::derive_seed(seed, "extractor", 0))?;
        let head = ClassifierHead::new(extractor.feature_dim(), classes, rng::derive_seed(seed, "head", 0))?;
        Ok(ModelState {
            extractor,
            head,
            role: Role::Student,
            frozen: false,
        })
    }

    /// A frozen copy acting as teacher.
    pub fn to_teacher(&self) -> ModelState {
        ModelState {
            role: Role::Teacher,
            frozen: true,
            ..self.clone()
        }
    }

    /// Copies `teacher` and appends head columns for `new_classes`.
    pub fn student_from(teacher: &ModelState, new_classes: &[usize], init_seed: u64) -> Result<Self> {
        Ok(ModelState {
            extractor: teacher.extractor.clone(),
            head: expand_head(&teacher.head, new_classes, init_seed)?,
            role: Role::Student,
            frozen: false,
        })
    }

    /// Parameters in binding order: each layer's weight and bias, then the head.
    pub fn params(&self) -> Vec<&Tensor> {
        self.extractor
            .layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .chain([&self.head.weight, &self.head.bias])
            .collect()
    }

    /// Mutable parameters for an optimizer step; refused while frozen.
    pub fn params_mut(&mut self) -> Result<Vec<&mut Tensor>> {
        if self.frozen {
            return Err(invalid_state!("{:?} model is frozen", self.role));
        }
        Ok(self
            .extractor
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .chain([&mut self.head.weight, &mut self.head.bias])
            .collect())
    }

    /// Records the parameters on `tape`; trainable bindings receive gradients,
    /// the rest are constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params()
            .into_iter()
            .map(|p| {
                if trainable && !self.frozen {
                    tape.leaf(&p.clone().with_grad())
                } else {
                    tape.constant(p)
                }
            })
            .collect();
        Bound { vars }
    }

    /// Logits `[B, M]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, clouds: &[Vec<[f64; 3]>]) -> Result<Var> {
        let split = bound.vars.len() - 2;
        let features = self.extractor.forward(tape, &bound.vars[..split], clouds)?;
        self.head
            .forward(tape, bound.vars[split], bound.vars[split + 1], features)
    }

    /// Detached logits, one row per cloud.
    pub fn logits(&self, clouds: &[Vec<[f64; 3]>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &bound, clouds)?;
        Ok(tape
            .value(out)
            .chunks_exact(self.head.num_classes())
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// SHA-256 over every parameter's shape and bits plus the class slots.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            p.fingerprint(&mut h);
        }
        for &c in &self.head.class_slots {
            h.update((c as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelState = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let cfg = &self.extractor.config;
        cfg.validate()?;
        if self.extractor.layers.len() != cfg.widths.len() {
            return Err(invalid_arg!(
                "{} layers for {} widths",
                self.extractor.layers.len(),
                cfg.widths.len()
            ));
        }
        let mut fan_in = cfg.kind.input_dim();
        for (layer, &w) in self.extractor.layers.iter().zip(&cfg.widths) {
            if layer.weight.shape() != [fan_in, w] || layer.bias.shape() != [w] {
                return Err(invalid_arg!("layer shapes do not match widths {:?}", cfg.widths));
            }
            fan_in = w;
        }
        let m = self.head.class_slots.len();
        if self.head.weight.shape() != [fan_in, m] || self.head.bias.shape() != [m] || self.head.column_seeds.len() != m
        {
            return Err(invalid_arg!("head shapes do not match {m} class slots"));
        }
        let unique: std::collections::HashSet<_> = self.head.class_slots.iter().collect();
        if unique.len() != m {
            return Err(invalid_arg!("duplicate class slots"));
        }
        if self.role == Role::Teacher && !self.frozen {
            return Err(invalid_arg!("a teacher must be frozen"));
        }
        Ok(())
    }
}
