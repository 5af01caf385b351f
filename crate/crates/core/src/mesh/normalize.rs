use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mesh, SimilarityTransform};
use crate::{Error, Point, Result, Vector};

/// Places `mesh` inside the hemisphere `z >= 0` of the given radius.
///
/// The mesh is shifted so its lowest vertex sits on `z = 0` and the smallest
/// circle enclosing its `xy` footprint is centred on the `z` axis, then it is
/// scaled uniformly so the farthest vertex lies on the sphere.
pub fn hemisphere_normalize(mesh: &Mesh, radius: f64) -> Result<(Mesh, SimilarityTransform)> {
    let transform = hemisphere_transform(mesh.vertices(), radius)?;
    Ok((mesh.transformed(&transform), transform))
}

/// The transform used by [`hemisphere_normalize`], computed from points.
pub fn hemisphere_transform(points: &[Point], radius: f64) -> Result<SimilarityTransform> {
    if points.is_empty() {
        return Err(Error::InvalidMesh("cannot normalize an empty mesh".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let min_z = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let footprint: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p.x, p.y)).collect();
    let (center, _) = smallest_enclosing_circle(&footprint);
    let shift = Vector::new(-center.x, -center.y, -min_z);

    let max_norm = points
        .iter()
        .map(|p| (p.coords + shift).norm())
        .fold(0.0, f64::max);
    if max_norm <= f64::EPSILON * (1.0 + shift.norm()) {
        // Every point coincides: lift it straight onto the pole.
        return SimilarityTransform::new(1.0, shift + Vector::new(0.0, 0.0, radius));
    }
    let scale = radius / max_norm;
    SimilarityTransform::new(scale, shift * scale)
}

/// Smallest circle containing every point (Welzl's incremental algorithm
/// with a fixed shuffle). Returns `(center, radius)`.
pub fn smallest_enclosing_circle(points: &[Vector2<f64>]) -> (Vector2<f64>, f64) {
    if points.is_empty() {
        return (Vector2::zeros(), 0.0);
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));

    let contains = |c: &(Vector2<f64>, f64), p: &Vector2<f64>| {
        (p - c.0).norm() <= c.1 * (1.0 + 1e-12) + 1e-14
    };

    let mut circle = (pts[0], 0.0);
    for i in 1..pts.len() {
        if contains(&circle, &pts[i]) {
            continue;
        }
        circle = (pts[i], 0.0);
        for j in 0..i {
            if contains(&circle, &pts[j]) {
                continue;
            }
            circle = diameter_circle(&pts[i], &pts[j]);
            for k in 0..j {
                if !contains(&circle, &pts[k]) {
                    circle = circumcircle(&pts[i], &pts[j], &pts[k]);
                }
            }
        }
    }
    circle
}

fn diameter_circle(a: &Vector2<f64>, b: &Vector2<f64>) -> (Vector2<f64>, f64) {
    let c = (a + b) * 0.5;
    (c, (a - c).norm().max((b - c).norm()))
}

fn circumcircle(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> (Vector2<f64>, f64) {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * (ab.x * ac.y - ab.y * ac.x);
    if d.abs() < 1e-300 {
        // collinear: the farthest pair spans the circle
        let candidates = [diameter_circle(a, b), diameter_circle(a, c), diameter_circle(b, c)];
        return candidates
            .into_iter()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
    }
    let ab2 = ab.norm_squared();
    let ac2 = ac.norm_squared();
    let ux = (ac.y * ab2 - ab.y * ac2) / d;
    let uy = (ab.x * ac2 - ac.x * ab2) / d;
    let center = a + Vector2::new(ux, uy);
    let r = [(a - center).norm(), (b - center).norm(), (c - center).norm()]
        .into_iter()
        .fold(0.0, f64::max);
    (center, r)
}
