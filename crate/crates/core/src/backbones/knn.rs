use crate::error::{invalid_arg, Result};

/// The `k` nearest other points of every point by Euclidean distance. Equal
/// distances go to the lower index.
pub fn knn(points: &[[f64; 3]], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if k == 0 || n <= k {
        return Err(invalid_arg!("kNN needs 1 <= k < n, got k={k} for n={n}"));
    }
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(points.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, q)| {
                let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], j)
            }));
            if k < scratch.len() {
                scratch.select_nth_unstable_by(k - 1, order);
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(order);
            scratch.iter().map(|&(_, j)| j).collect()
        })
        .collect())
}
