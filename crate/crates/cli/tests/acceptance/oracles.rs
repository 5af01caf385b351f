//! Reference computations written directly from the definitions, sharing
//! no code with the library.

use ffd_core::{mesh::Mesh, Point, Vector};

fn binomial(n: usize, k: usize) -> f64 {
    let mut num = 1u64;
    let mut den = 1u64;
    for i in 0..k {
        num *= (n - i) as u64;
        den *= (i + 1) as u64;
    }
    (num / den) as f64
}

pub fn bernstein(n: usize, k: usize, x: f64) -> f64 {
    binomial(n, k) * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32)
}

/// Box lattice given by a corner and three edge vectors.
#[derive(Clone)]
pub struct Lattice {
    pub origin: Point,
    pub axes: [Vector; 3],
    pub degrees: [usize; 3],
}

impl Lattice {
    pub fn point_at(&self, stu: [f64; 3]) -> Point {
        self.origin + self.axes[0] * stu[0] + self.axes[1] * stu[1] + self.axes[2] * stu[2]
    }

    /// Rest position of control point (i, j, k).
    pub fn control(&self, i: usize, j: usize, k: usize) -> Point {
        let [l, m, n] = self.degrees;
        self.point_at([i as f64 / l as f64, j as f64 / m as f64, k as f64 / n as f64])
    }

    /// Triple Bernstein sum over displaced control points; `delta(i, j, k)`.
    pub fn deform(&self, stu: [f64; 3], delta: impl Fn(usize, usize, usize) -> Vector) -> Point {
        let [l, m, n] = self.degrees;
        let mut acc = Vector::zeros();
        for i in 0..=l {
            for j in 0..=m {
                for k in 0..=n {
                    let w = bernstein(l, i, stu[0]) * bernstein(m, j, stu[1]) * bernstein(n, k, stu[2]);
                    acc += (self.control(i, j, k).coords + delta(i, j, k)) * w;
                }
            }
        }
        Point::from(acc)
    }

    pub fn len(&self) -> usize {
        self.degrees.iter().map(|d| d + 1).product()
    }
}

/// Nearest index in `b` for every point of `a` (lowest index on ties) and
/// the summed squared distances.
pub fn directed(a: &[Point], b: &[Point]) -> (f64, Vec<usize>) {
    let mut sum = 0.0;
    let mut idx = Vec::with_capacity(a.len());
    for p in a {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, q) in b.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (j, d);
            }
        }
        sum += best.1;
        idx.push(best.0);
    }
    (sum, idx)
}

pub fn chamfer_sum(a: &[Point], b: &[Point]) -> f64 {
    directed(a, b).0 + directed(b, a).0
}

pub fn chamfer_mean(a: &[Point], b: &[Point]) -> f64 {
    directed(a, b).0 / a.len() as f64 + directed(b, a).0 / b.len() as f64
}

/// Minimum matching cost over all permutations (Heap's algorithm).
pub fn emd_permutations(a: &[Point], b: &[Point]) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).norm()).sum() };
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Exact min-cost perfect matching by successive shortest augmenting paths
/// (Dijkstra on reduced costs) over the complete bipartite graph.
pub fn emd_shortest_paths(a: &[Point], b: &[Point]) -> f64 {
    let n = a.len();
    let cost = |i: usize, j: usize| (a[i] - b[j]).norm();
    let mut pot_left = vec![0.0f64; n];
    let mut pot_right = vec![0.0f64; n];
    let mut match_right: Vec<Option<usize>> = vec![None; n];
    let mut match_left: Vec<Option<usize>> = vec![None; n];
    for source in 0..n {
        // dist over right vertices; left vertices are reached via matches
        let mut dist = vec![f64::INFINITY; n];
        let mut parent_left = vec![usize::MAX; n];
        let mut done = vec![false; n];
        for j in 0..n {
            dist[j] = cost(source, j) - pot_left[source] - pot_right[j];
            parent_left[j] = source;
        }
        let end = loop {
            let mut j_min = usize::MAX;
            for j in 0..n {
                if !done[j] && (j_min == usize::MAX || dist[j] < dist[j_min]) {
                    j_min = j;
                }
            }
            done[j_min] = true;
            match match_right[j_min] {
                None => break j_min,
                Some(i) => {
                    for j in 0..n {
                        if !done[j] {
                            let nd = dist[j_min] + cost(i, j) - pot_left[i] - pot_right[j];
                            if nd < dist[j] {
                                dist[j] = nd;
                                parent_left[j] = i;
                            }
                        }
                    }
                }
            }
        };
        let d_end = dist[end];
        // update potentials so reduced costs stay non-negative
        pot_left[source] += d_end;
        for j in 0..n {
            if done[j] && j != end {
                let delta = d_end - dist[j];
                pot_right[j] -= delta;
                if let Some(i) = match_right[j] {
                    pot_left[i] += delta;
                }
            }
        }
        // augment along the path
        let mut j = end;
        loop {
            let i = parent_left[j];
            let previous = match_left[i];
            match_right[j] = Some(i);
            match_left[i] = Some(j);
            if i == source {
                break;
            }
            j = previous.expect("inner path vertex is matched");
        }
    }
    (0..n).map(|i| cost(i, match_left[i].unwrap())).sum()
}

pub fn surface_area(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    mesh.faces().iter().map(|f| 0.5 * (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]])).norm()).sum()
}

pub fn max_edge(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    let mut m = 0.0f64;
    for f in mesh.faces() {
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            m = m.max((v[f[a]] - v[f[b]]).norm());
        }
    }
    m
}

pub fn softmax_floor(logits: &[f64], eps: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    let t = logits.len() as f64;
    e.iter().map(|x| (1.0 - eps) * x / s + eps / t).collect()
}

pub fn shannon_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p.ln()
        })
        .sum::<f64>()
}
