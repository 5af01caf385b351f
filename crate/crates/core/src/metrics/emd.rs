//! Exact earth mover distance between equal-size clouds via optimal
//! assignment.

use crate::{Error, Point, Result};

/// Default largest cloud accepted by [`earth_mover`].
pub const DEFAULT_EMD_CAP: usize = 4096;

/// Optimal one-to-one matching of `a` onto `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[i]` is the index in `b` matched with `a[i]`.
    pub mapping: Vec<usize>,
    /// Total Euclidean (not squared) distance of the matching.
    pub cost: f64,
}

/// Earth mover distance: minimum over bijections of summed point distances.
pub fn earth_mover(a: &[Point], b: &[Point]) -> Result<f64> {
    earth_mover_with_cap(a, b, DEFAULT_EMD_CAP).map(|r| r.cost)
}

/// [`earth_mover`] with an explicit size cap, returning the matching.
pub fn earth_mover_with_cap(a: &[Point], b: &[Point], cap: usize) -> Result<Assignment> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "earth mover distance needs equal sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() > cap {
        return Err(Error::SolverCapExceeded { size: a.len(), cap });
    }
    let n = a.len();
    let matrix: Vec<f64> = a.iter().flat_map(|p| b.iter().map(move |q| (p - q).norm())).collect();
    let mapping = hungarian(n, &matrix);
    let total = mapping.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).norm()).sum();
    Ok(Assignment { mapping, cost: total })
}

/// Shortest-augmenting-path Hungarian algorithm with potentials, O(n^3).
/// Rows are added one at a time; each addition runs a Dijkstra-like sweep
/// over the columns using reduced costs.
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row_cost = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = row_cost[j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[row_of[j] - 1] = j - 1;
    }
    mapping
}
