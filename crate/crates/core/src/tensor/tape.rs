use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{invalid_arg, invalid_state, Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Symmetric reduction over groups of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Max,
    Mean,
    Sum,
}

impl std::fmt::Display for Reduce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduce::Max => "max",
            Reduce::Mean => "mean",
            Reduce::Sum => "sum",
        })
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Log(usize),
    Reshape(usize),
    ReduceGroups {
        input: usize,
        group: usize,
        kind: Reduce,
        // flat input index of the winner for each output cell (max only)
        argmax: Vec<usize>,
    },
    ConcatCols(usize, usize),
    GatherRows {
        input: usize,
        index: Vec<usize>,
    },
    SliceCols {
        input: usize,
        start: usize,
        end: usize,
    },
    Softmax {
        input: usize,
        tau: f64,
    },
    LogSoftmax {
        input: usize,
        tau: f64,
    },
    Nll {
        input: usize,
        labels: Vec<usize>,
    },
    SumAll(usize),
    MeanAll(usize),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

impl Node {
    fn rows_cols(&self) -> (usize, usize) {
        rows_cols(&self.shape)
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.last() {
        None => (1, 1),
        Some(&cols) => (shape.iter().product::<usize>() / cols, cols),
    }
}

/// Append-only record of primitive operations.
///
/// Nodes are stored in creation order, so every node's inputs precede it and
/// the reverse sweep in [`Tape::backward`] is a plain reverse iteration.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, var: Var) -> Result<&Node> {
        if var.tape != self.id {
            return Err(invalid_state!("value belongs to a different tape"));
        }
        Ok(&self.nodes[var.index])
    }

    fn push(&mut self, name: &'static str, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::ConcatCols(a, b) => self.nodes[*a].requires_grad || self.nodes[*b].requires_grad,
            Op::Scale(a, _) | Op::Relu(a) | Op::Log(a) | Op::Reshape(a) | Op::SumAll(a) | Op::MeanAll(a) => {
                self.nodes[*a].requires_grad
            }
            Op::ReduceGroups { input, .. }
            | Op::GatherRows { input, .. }
            | Op::SliceCols { input, .. }
            | Op::Softmax { input, .. }
            | Op::LogSoftmax { input, .. }
            | Op::Nll { input, .. } => self.nodes[*input].requires_grad,
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    /// Records a tensor as a leaf; it is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        let var = self
            .push("leaf", tensor.shape().to_vec(), tensor.data().to_vec(), Op::Leaf)
            .expect("tensor values are finite by construction");
        self.nodes[var.index].requires_grad = tensor.requires_grad();
        var
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, tensor: &Tensor) -> Var {
        let var = self.leaf(tensor);
        self.nodes[var.index].requires_grad = false;
        var
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.node(var).expect("var from another tape").value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.node(var).expect("var from another tape").shape
    }

    /// Detached copy of a recorded value.
    pub fn tensor(&self, var: Var) -> Tensor {
        let node = self.node(var).expect("var from another tape");
        Tensor::new(node.shape.clone(), node.value.clone()).expect("tape values are finite")
    }

    fn matrix(&self, var: Var, op: &str) -> Result<(usize, usize)> {
        let node = self.node(var)?;
        match node.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(invalid_arg!("{op} expects a matrix, got shape {other:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(invalid_arg!("matmul inner dimensions differ: {m}x{k} by {k2}x{n}"));
        }
        let out = matmul_kernel(&self.nodes[a.index].value, &self.nodes[b.index].value, m, k, n);
        self.push("matmul", vec![m, n], out, Op::MatMul(a.index, b.index))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (&self.node(a)?.shape, &self.node(b)?.shape);
        if sa != sb {
            return Err(invalid_arg!("{op} shape mismatch: {sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (va, vb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        let out = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.nodes[a.index].shape.clone();
        self.push(name, shape, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a.index, b.index))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a.index, b.index))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a.index, b.index))
    }

    /// Adds a vector of length `cols` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (rows, cols) = self.node(x)?.rows_cols();
        let row_len = self.node(row)?.value.len();
        if row_len != cols {
            return Err(invalid_arg!("row of length {row_len} added to rows of length {cols}"));
        }
        let (vx, vr) = (&self.nodes[x.index].value, &self.nodes[row.index].value);
        let mut out = vx.clone();
        for r in 0..rows {
            for (o, b) in out[r * cols..(r + 1) * cols].iter_mut().zip(vr) {
                *o += b;
            }
        }
        let shape = self.nodes[x.index].shape.clone();
        self.push("add_row", shape, out, Op::AddRow(x.index, row.index))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let node = self.node(x)?;
        let out = node.value.iter().map(|v| v * factor).collect();
        let shape = node.shape.clone();
        self.push("scale", shape, out, Op::Scale(x.index, factor))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let node = self.node(x)?;
        let out = node.value.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let shape = node.shape.clone();
        self.push("relu", shape, out, Op::Relu(x.index))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let node = self.node(x)?;
        let out = node.value.iter().map(|v| v.ln()).collect();
        let shape = node.shape.clone();
        self.push("log", shape, out, Op::Log(x.index))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let node = self.node(x)?;
        if shape.iter().product::<usize>() != node.value.len() || shape.contains(&0) {
            return Err(invalid_arg!("cannot reshape {:?} to {shape:?}", node.shape));
        }
        let out = node.value.clone();
        self.push("reshape", shape, out, Op::Reshape(x.index))
    }

    /// Reduces consecutive groups of `group` rows of a matrix, giving one row
    /// per group. Max ties resolve to the earliest row of the group.
    pub fn reduce_groups(&mut self, x: Var, group: usize, kind: Reduce) -> Result<Var> {
        let (rows, cols) = self.matrix(x, "reduce_groups")?;
        if group == 0 || rows % group != 0 {
            return Err(invalid_arg!("cannot split {rows} rows into groups of {group}"));
        }
        let groups = rows / group;
        let v = &self.nodes[x.index].value;
        let mut out = vec![0.0; groups * cols];
        let mut argmax = Vec::new();
        match kind {
            Reduce::Max => {
                argmax = vec![0; groups * cols];
                for g in 0..groups {
                    let base = g * group;
                    for c in 0..cols {
                        let mut best = base * cols + c;
                        for r in base + 1..base + group {
                            let idx = r * cols + c;
                            if v[idx] > v[best] {
                                best = idx;
                            }
                        }
                        out[g * cols + c] = v[best];
                        argmax[g * cols + c] = best;
                    }
                }
            }
            Reduce::Sum | Reduce::Mean => {
                for g in 0..groups {
                    let acc = &mut out[g * cols..(g + 1) * cols];
                    for r in g * group..(g + 1) * group {
                        for (a, x) in acc.iter_mut().zip(&v[r * cols..(r + 1) * cols]) {
                            *a += x;
                        }
                    }
                    if kind == Reduce::Mean {
                        let inv = 1.0 / group as f64;
                        acc.iter_mut().for_each(|a| *a *= inv);
                    }
                }
            }
        }
        self.push(
            "reduce_groups",
            vec![groups, cols],
            out,
            Op::ReduceGroups {
                input: x.index,
                group,
                kind,
                argmax,
            },
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.matrix(a, "concat_cols")?;
        let (rb, cb) = self.matrix(b, "concat_cols")?;
        if ra != rb {
            return Err(invalid_arg!("concat_cols row counts differ: {ra} vs {rb}"));
        }
        let (va, vb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(&va[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&vb[r * cb..(r + 1) * cb]);
        }
        self.push("concat_cols", vec![ra, ca + cb], out, Op::ConcatCols(a.index, b.index))
    }

    /// Selects rows of a matrix by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.matrix(x, "gather_rows")?;
        if index.is_empty() {
            return Err(invalid_arg!("gather_rows needs at least one index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(invalid_arg!("gather index {bad} out of range for {rows} rows"));
        }
        let v = &self.nodes[x.index].value;
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index {
            out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
        }
        self.push(
            "gather_rows",
            vec![index.len(), cols],
            out,
            Op::GatherRows {
                input: x.index,
                index: index.to_vec(),
            },
        )
    }

    /// Keeps columns `start..end` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let node = self.node(x)?;
        let (rows, cols) = node.rows_cols();
        if start >= end || end > cols {
            return Err(invalid_arg!("column range {start}..{end} invalid for {cols} columns"));
        }
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&node.value[r * cols + start..r * cols + end]);
        }
        let mut shape = node.shape.clone();
        *shape.last_mut().expect("rows_cols checked rank") = end - start;
        self.push(
            "slice_cols",
            shape,
            out,
            Op::SliceCols {
                input: x.index,
                start,
                end,
            },
        )
    }

    fn check_tau(tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid_arg!("temperature must be positive, got {tau}"));
        }
        Ok(())
    }

    /// Row-wise softmax of `x / tau` over the last axis.
    pub fn softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        Self::check_tau(tau)?;
        let node = self.node(x)?;
        if node.shape.is_empty() {
            return Err(invalid_arg!("softmax needs at least one axis"));
        }
        let (rows, cols) = node.rows_cols();
        let mut out = node.value.clone();
        for r in 0..rows {
            softmax_row(&mut out[r * cols..(r + 1) * cols], tau);
        }
        let shape = node.shape.clone();
        self.push("softmax", shape, out, Op::Softmax { input: x.index, tau })
    }

    /// Row-wise log-softmax of `x / tau` over the last axis.
    pub fn log_softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        Self::check_tau(tau)?;
        let node = self.node(x)?;
        if node.shape.is_empty() {
            return Err(invalid_arg!("log_softmax needs at least one axis"));
        }
        let (rows, cols) = node.rows_cols();
        let mut out = node.value.clone();
        for r in 0..rows {
            log_softmax_row(&mut out[r * cols..(r + 1) * cols], tau);
        }
        let shape = node.shape.clone();
        self.push("log_softmax", shape, out, Op::LogSoftmax { input: x.index, tau })
    }

    /// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
    pub fn nll(&mut self, log_probs: Var, labels: &[usize]) -> Result<Var> {
        let (rows, cols) = self.matrix(log_probs, "nll")?;
        if labels.len() != rows {
            return Err(invalid_arg!("{} labels for {rows} rows", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(invalid_arg!("label {bad} out of range for {cols} classes"));
        }
        let v = &self.nodes[log_probs.index].value;
        let total: f64 = labels.iter().enumerate().map(|(r, &l)| v[r * cols + l]).sum();
        self.push(
            "nll",
            Vec::new(),
            vec![-total / rows as f64],
            Op::Nll {
                input: log_probs.index,
                labels: labels.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.node(x)?.value.iter().sum();
        self.push("sum", Vec::new(), vec![total], Op::SumAll(x.index))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = &self.node(x)?.value;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        self.push("mean", Vec::new(), vec![mean], Op::MeanAll(x.index))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if root.tape != self.id {
            return Err(invalid_state!("backward root was not recorded on this tape"));
        }
        if self.nodes[root.index].value.len() != 1 {
            return Err(invalid_arg!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.index].shape
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.index + 1];
        grads[root.index] = Some(vec![1.0]);

        for i in (0..=root.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |idx: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[idx].requires_grad {
                return;
            }
            let slot = grads[idx].get_or_insert_with(|| vec![0.0; nodes[idx].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = nodes[a].rows_cols();
                let n = node.shape[1];
                let (va, vb) = (&nodes[a].value, &nodes[b].value);
                // dA += G·Bᵀ, dB += Aᵀ·G
                acc(a, &mut |ga| gemm_acc(m, n, k, g, (n, 1), vb, (1, n), ga));
                acc(b, &mut |gb| gemm_acc(k, m, n, va, (1, k), g, (n, 1), gb));
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| add_into(gb, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, x)| *o -= x));
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a].value, &nodes[b].value);
                acc(a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(vb) {
                        *o += x * y;
                    }
                });
                acc(b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(va) {
                        *o += x * y;
                    }
                });
            }
            &Op::AddRow(x, row) => {
                let (rows, cols) = node.rows_cols();
                acc(x, &mut |gx| add_into(gx, g));
                acc(row, &mut |gr| {
                    for r in 0..rows {
                        add_into(gr, &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            &Op::Scale(x, factor) => {
                acc(x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += factor * v));
            }
            &Op::Relu(x) => {
                let vx = &nodes[x].value;
                acc(x, &mut |gx| {
                    for ((o, v), xin) in gx.iter_mut().zip(g).zip(vx) {
                        if *xin > 0.0 {
                            *o += v;
                        }
                    }
                });
            }
            &Op::Log(x) => {
                let vx = &nodes[x].value;
                acc(x, &mut |gx| {
                    for ((o, v), xin) in gx.iter_mut().zip(g).zip(vx) {
                        *o += v / xin;
                    }
                });
            }
            &Op::Reshape(x) => acc(x, &mut |gx| add_into(gx, g)),
            &Op::SumAll(x) => acc(x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            &Op::MeanAll(x) => {
                let d = g[0] / nodes[x].value.len() as f64;
                acc(x, &mut |gx| gx.iter_mut().for_each(|o| *o += d));
            }
            Op::ReduceGroups {
                input,
                group,
                kind,
                argmax,
            } => {
                let (groups, cols) = node.rows_cols();
                acc(*input, &mut |gx| match kind {
                    Reduce::Max => {
                        for (o, &src) in g.iter().zip(argmax) {
                            gx[src] += o;
                        }
                    }
                    Reduce::Sum | Reduce::Mean => {
                        let w = if *kind == Reduce::Mean {
                            1.0 / *group as f64
                        } else {
                            1.0
                        };
                        for gi in 0..groups {
                            let go = &g[gi * cols..(gi + 1) * cols];
                            for r in gi * group..(gi + 1) * group {
                                for (o, v) in gx[r * cols..(r + 1) * cols].iter_mut().zip(go) {
                                    *o += w * v;
                                }
                            }
                        }
                    }
                });
            }
            &Op::ConcatCols(a, b) => {
                let (rows, _) = node.rows_cols();
                let ca = nodes[a].shape[1];
                let cb = nodes[b].shape[1];
                let width = ca + cb;
                acc(a, &mut |ga| {
                    for r in 0..rows {
                        add_into(&mut ga[r * ca..(r + 1) * ca], &g[r * width..r * width + ca]);
                    }
                });
                acc(b, &mut |gb| {
                    for r in 0..rows {
                        add_into(&mut gb[r * cb..(r + 1) * cb], &g[r * width + ca..(r + 1) * width]);
                    }
                });
            }
            Op::GatherRows { input, index } => {
                let cols = nodes[*input].shape[1];
                acc(*input, &mut |gx| {
                    for (r, &src) in index.iter().enumerate() {
                        add_into(&mut gx[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            &Op::SliceCols { input, start, end } => {
                let (rows, cols) = nodes[input].rows_cols();
                let width = end - start;
                acc(input, &mut |gx| {
                    for r in 0..rows {
                        add_into(
                            &mut gx[r * cols + start..r * cols + end],
                            &g[r * width..(r + 1) * width],
                        );
                    }
                });
            }
            &Op::Softmax { input, tau } => {
                let (rows, cols) = node.rows_cols();
                let y = &node.value;
                acc(input, &mut |gx| {
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, yj), gj) in gx[r * cols..(r + 1) * cols].iter_mut().zip(yr).zip(gr) {
                            *o += yj * (gj - dot) / tau;
                        }
                    }
                });
            }
            &Op::LogSoftmax { input, tau } => {
                let (rows, cols) = node.rows_cols();
                let y = &node.value;
                acc(input, &mut |gx| {
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let total: f64 = gr.iter().sum();
                        for ((o, yj), gj) in gx[r * cols..(r + 1) * cols].iter_mut().zip(yr).zip(gr) {
                            *o += (gj - yj.exp() * total) / tau;
                        }
                    }
                });
            }
            Op::Nll { input, labels } => {
                let cols = nodes[*input].shape[1];
                let d = -g[0] / labels.len() as f64;
                acc(*input, &mut |gx| {
                    for (r, &l) in labels.iter().enumerate() {
                        gx[r * cols + l] += d;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm_acc(m, k, n, a, (k, 1), b, (n, 1), &mut out);
    out
}

/// `c += a·b` for an `m×k` by `k×n` product; each operand is given with its
/// (row, column) strides so transposes cost nothing.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64]) {
    debug_assert!(c.len() == m * n);
    debug_assert!(m == 0 || k == 0 || (m - 1) * sa.0 + (k - 1) * sa.1 < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * sb.0 + (n - 1) * sb.1 < b.len());
    // SAFETY: the strides address only elements inside `a`, `b` and `c`, as the
    // assertions above spell out; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn softmax_row(row: &mut [f64], tau: f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / tau).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn log_softmax_row(row: &mut [f64], tau: f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|v| ((v - max) / tau).exp()).sum();
    let log_total = total.ln();
    row.iter_mut().for_each(|v| *v = (*v - max) / tau - log_total);
}

/// Standalone temperature softmax of a logit vector.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(invalid_arg!("softmax of empty logits"));
    }
    Tape::check_tau(tau)?;
    let mut out = logits.to_vec();
    softmax_row(&mut out, tau);
    Ok(out)
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when `var` is unreachable from the root.
    pub fn wrt(&self, tape: &Tape, var: Var) -> Vec<f64> {
        assert_eq!(var.tape, self.tape, "var from another tape");
        match self.grads.get(var.index).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => vec![0.0; tape.nodes[var.index].value.len()],
        }
    }

    /// Writes the gradient of each leaf into the matching tensor's `grad`.
    pub fn write_into<'a>(&self, tape: &Tape, pairs: impl IntoIterator<Item = (Var, &'a mut Tensor)>) -> Result<()> {
        for (var, tensor) in pairs {
            tensor.set_grad(self.wrt(tape, var))?;
        }
        Ok(())
    }
}
