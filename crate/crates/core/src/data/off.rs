//! OFF mesh parsing and area-weighted surface sampling.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

struct Lines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank, non-comment line with its byte offset.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.text.len() {
            let start = self.pos;
            let rest = &self.text[start..];
            let end = rest.find('\n').map_or(self.text.len(), |i| start + i + 1);
            self.pos = end;
            let line = &self.text[start..end];
            let content = line.split('#').next().unwrap_or("");
            let lead = content.len() - content.trim_start().len();
            if !content.trim().is_empty() {
                return Some((start + lead, content.trim()));
            }
        }
        None
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Whitespace-separated tokens of a line with their offsets within it.
fn spans(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for tok in line.split_whitespace() {
        let at = cursor + line[cursor..].find(tok).expect("token comes from this line");
        cursor = at + tok.len();
        out.push((at, tok));
    }
    out
}

fn parse_tokens<T: std::str::FromStr>(toks: &[(usize, &str)], offset: usize, what: &str) -> Result<Vec<T>> {
    toks.iter()
        .map(|&(at, tok)| {
            tok.parse::<T>()
                .map_err(|_| parse_err(offset + at, format!("expected {what}, found `{tok}`")))
        })
        .collect()
}

fn tokens<T: std::str::FromStr>(line: &str, offset: usize, what: &str) -> Result<Vec<T>> {
    parse_tokens(&spans(line), offset, what)
}

/// Parses an OFF mesh. Polygons are fan-triangulated. The header may carry
/// the counts on the magic line itself, glued (`OFF490 322 0`) or spaced.
pub fn parse_off(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(e.valid_up_to(), "input is not valid UTF-8"))?;
    let mut lines = Lines { text, pos: 0 };

    let (offset, first) = lines.next_content().ok_or_else(|| parse_err(0, "empty input"))?;
    let Some(after_magic) = first.strip_prefix("OFF") else {
        return Err(parse_err(offset, "missing `OFF` magic"));
    };
    let (count_offset, count_line) = if after_magic.trim().is_empty() {
        lines
            .next_content()
            .ok_or_else(|| parse_err(text.len(), "missing vertex/face counts"))?
    } else {
        let lead = after_magic.len() - after_magic.trim_start().len();
        (offset + 3 + lead, after_magic.trim())
    };
    let counts: Vec<usize> = tokens(count_line, count_offset, "a count")?;
    if counts.len() < 2 {
        return Err(parse_err(count_offset, "header needs vertex and face counts"));
    }
    let (n_vertices, n_faces) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(n_vertices);
    for i in 0..n_vertices {
        let (off, line) = lines
            .next_content()
            .ok_or_else(|| parse_err(text.len(), format!("expected vertex {i} of {n_vertices}")))?;
        let v: Vec<f64> = tokens(line, off, "a coordinate")?;
        if v.len() < 3 || v[..3].iter().any(|c| !c.is_finite()) {
            return Err(parse_err(off, format!("vertex {i} needs three finite coordinates")));
        }
        vertices.push([v[0], v[1], v[2]]);
    }

    let mut faces = Vec::with_capacity(n_faces);
    for i in 0..n_faces {
        let (off, line) = lines
            .next_content()
            .ok_or_else(|| parse_err(text.len(), format!("expected face {i} of {n_faces}")))?;
        let toks = spans(line);
        let arity: usize = toks
            .first()
            .and_then(|(_, t)| t.parse().ok())
            .ok_or_else(|| parse_err(off, format!("face {i} lacks a vertex count")))?;
        if arity < 3 {
            return Err(parse_err(off, format!("face {i} has {arity} vertices")));
        }
        if toks.len() < arity + 1 {
            return Err(parse_err(off, format!("face {i} lists fewer than {arity} indices")));
        }
        // trailing colour values after the indices are ignored
        let idx: Vec<usize> = parse_tokens(&toks[1..=arity], off, "a vertex index")?;
        if let Some(&bad) = idx.iter().find(|&&v| v >= n_vertices) {
            return Err(parse_err(
                off,
                format!("face {i} references vertex {bad} of {n_vertices}"),
            ));
        }
        for k in 1..arity - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(Mesh { vertices, faces })
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt()
}

/// Draws `n` points uniformly over the surface area.
pub fn sample_surface_points(mesh: &Mesh, n: usize, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot sample zero points".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        cumulative.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidInput("mesh has zero surface area".into()));
    }
    let mut rng = rng::derived(seed, "surface-sample", 0);
    let mut out = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let target = rng::uniform(&mut rng) * total;
        let face = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.faces[face].map(|i| mesh.vertices[i]);
        let s = rng::uniform(&mut rng).sqrt();
        let r = rng::uniform(&mut rng);
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r), s * r);
        for d in 0..3 {
            out.push(wa * a[d] + wb * b[d] + wc * c[d]);
        }
    }
    Tensor::matrix(n, 3, out)
}
