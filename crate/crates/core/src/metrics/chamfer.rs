//! Chamfer distance: summed squared nearest-neighbour distances in both
//! directions.

use rayon::prelude::*;

use super::spatial::KdTree;
use crate::{Error, Point, Result};

/// Nearest-neighbour correspondences in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferMatches {
    /// For each point of `a`: index of its nearest point in `b` and the
    /// squared distance.
    pub a_to_b: Vec<(usize, f64)>,
    /// For each point of `b`: nearest point in `a`.
    pub b_to_a: Vec<(usize, f64)>,
}

impl ChamferMatches {
    /// Sum of squared distances over both directions.
    pub fn sum(&self) -> f64 {
        directed_sum(&self.a_to_b) + directed_sum(&self.b_to_a)
    }

    /// Each direction averaged over its own cloud, then added.
    pub fn mean(&self) -> f64 {
        directed_sum(&self.a_to_b) / self.a_to_b.len() as f64
            + directed_sum(&self.b_to_a) / self.b_to_a.len() as f64
    }

    /// True when both match the same index pairs, ignoring distances.
    pub fn same_correspondences(&self, other: &ChamferMatches) -> bool {
        let same = |x: &[(usize, f64)], y: &[(usize, f64)]| {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| a.0 == b.0)
        };
        same(&self.a_to_b, &other.a_to_b) && same(&self.b_to_a, &other.b_to_a)
    }
}

fn directed_sum(matches: &[(usize, f64)]) -> f64 {
    matches.iter().map(|m| m.1).sum()
}

/// Nearest neighbour of every query point within `tree`.
pub fn nearest_all(tree: &KdTree<'_>, queries: &[Point]) -> Vec<(usize, f64)> {
    queries
        .par_iter()
        .map(|q| tree.nearest(q).expect("tree is non-empty"))
        .collect()
}

/// Correspondences between two non-empty clouds.
pub fn chamfer_matches(a: &[Point], b: &[Point]) -> Result<ChamferMatches> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("chamfer distance needs non-empty clouds".into()));
    }
    let tree_a = KdTree::new(a);
    let tree_b = KdTree::new(b);
    Ok(ChamferMatches { a_to_b: nearest_all(&tree_b, a), b_to_a: nearest_all(&tree_a, b) })
}

/// Summed Chamfer distance
/// `sum_a min_b |a - b|^2 + sum_b min_a |b - a|^2`.
pub fn chamfer(a: &[Point], b: &[Point]) -> Result<f64> {
    Ok(chamfer_matches(a, b)?.sum())
}
