use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mesh, PointCloud};
use crate::{Error, Point, Result};

/// Draws `n_samples` points uniformly over the surface area of `mesh`.
///
/// A face is picked with probability proportional to its area, then a point
/// is placed uniformly inside it via square-root barycentric sampling.
/// Output is a pure function of `(mesh, n_samples, seed)`.
pub fn sample_surface(mesh: &Mesh, n_samples: usize, seed: u64) -> Result<PointCloud> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let target = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let u = 1.0 - r1;
        let v = r1 * (1.0 - r2);
        let w = r1 * r2;
        points.push(Point::from(a.coords * u + b.coords * v + c.coords * w));
    }
    Ok(PointCloud::new(points))
}

/// Picks `n` distinct points (with their labels) without replacement.
pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    let indices = subsample_indices(cloud.len(), n, seed)?;
    let points = indices.iter().map(|&i| cloud.points()[i]).collect();
    match cloud.labels() {
        Some(labels) => PointCloud::with_labels(points, indices.iter().map(|&i| labels[i]).collect()),
        None => Ok(PointCloud::new(points)),
    }
}

/// Index form of [`subsample`].
pub fn subsample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} distinct points from a cloud of {len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, len, n).into_vec())
}
