//! Trivariate Bernstein free-form deformation.
//!
//! A [`ControlLattice`] spans a box with three orthogonal axes and carries a
//! regular `(l+1) x (m+1) x (n+1)` grid of control points. Every embedded
//! point gets local coordinates `(s, t, u)` in the box, and its deformed
//! position is the Bernstein-weighted sum of the control points. Stacking
//! the weights for `N` points gives the dense `N x M` [`DeformationMatrix`],
//! so deforming is a single product `B (P + dP)`.
//!
//! Control points are flattened with `k` fastest, then `j`, then `i`:
//! `index = i (m+1)(n+1) + j (n+1) + k`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, PointCloud};
use crate::{Error, Point, Result, Vector};

/// Default fractional padding added to each side of the bounding box.
pub const DEFAULT_PADDING: f64 = 0.05;

/// Points whose local coordinate leaves `[0, 1]` by more than this are
/// counted as outside the lattice.
const OUTSIDE_TOLERANCE: f64 = 1e-12;

/// FFD control grid over an oriented box.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLattice {
    origin: Point,
    axes: [Vector; 3],
    degrees: [usize; 3],
    padding: f64,
    control_points: Vec<Point>,
}

impl ControlLattice {
    /// Lattice with corner `origin`, spanning `axes` (pairwise orthogonal),
    /// with control points on the regular grid.
    pub fn new(origin: Point, axes: [Vector; 3], degrees: [usize; 3]) -> Result<Self> {
        if degrees.contains(&0) {
            return Err(Error::InvalidArgument(format!("degrees must be >= 1, got {degrees:?}")));
        }
        for (a, axis) in axes.iter().enumerate() {
            if !(axis.norm() > 0.0) || !axis.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidArgument(format!("axis {a} is degenerate")));
            }
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let cos = axes[a].dot(&axes[b]) / (axes[a].norm() * axes[b].norm());
            if cos.abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("axes {a} and {b} are not orthogonal")));
            }
        }
        let [l, m, n] = degrees;
        let mut control_points = Vec::with_capacity((l + 1) * (m + 1) * (n + 1));
        for i in 0..=l {
            for j in 0..=m {
                for k in 0..=n {
                    control_points.push(
                        origin
                            + axes[0] * (i as f64 / l as f64)
                            + axes[1] * (j as f64 / m as f64)
                            + axes[2] * (k as f64 / n as f64),
                    );
                }
            }
        }
        Ok(Self { origin, axes, degrees, padding: 0.0, control_points })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn axes(&self) -> &[Vector; 3] {
        &self.axes
    }

    pub fn degrees(&self) -> [usize; 3] {
        self.degrees
    }

    /// Padding fraction the lattice was built with (zero for [`ControlLattice::new`]).
    pub fn padding(&self) -> f64 {
        self.padding
    }

    /// Rest positions `P` of the control points, in flattening order.
    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    /// Number of control points `M`.
    pub fn len(&self) -> usize {
        self.control_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_points.is_empty()
    }

    /// Flattened index of control point `(i, j, k)`.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [_, m, n] = self.degrees;
        i * (m + 1) * (n + 1) + j * (n + 1) + k
    }

    /// Largest edge length of the lattice box.
    pub fn extent(&self) -> f64 {
        self.axes.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Coordinates of `p` in the unit cube spanned by the lattice.
    pub fn local_coordinates(&self, p: &Point) -> [f64; 3] {
        let d = p - self.origin;
        [0, 1, 2].map(|a| d.dot(&self.axes[a]) / self.axes[a].norm_squared())
    }

    pub fn metadata(&self) -> LatticeMetadata {
        LatticeMetadata {
            degrees: self.degrees,
            origin: self.origin.coords.into(),
            axes: self.axes.map(Into::into),
            padding: self.padding,
            control_points: self.len(),
            ordering: "i*(m+1)*(n+1) + j*(n+1) + k".into(),
        }
    }

    pub fn from_metadata(meta: &LatticeMetadata) -> Result<Self> {
        let mut lattice = Self::new(
            Point::from(meta.origin),
            meta.axes.map(Vector::from),
            meta.degrees,
        )?;
        lattice.padding = meta.padding;
        if lattice.len() != meta.control_points {
            return Err(Error::DimensionMismatch(format!(
                "metadata lists {} control points, degrees give {}",
                meta.control_points,
                lattice.len()
            )));
        }
        Ok(lattice)
    }
}

/// Axis-aligned lattice around `points`, with the bounding box grown by
/// `padding` times its extent on every side.
///
/// Axes thinner than `1e-9` are widened to that size; an input whose three
/// extents are all zero is rejected.
pub fn build_lattice(points: &[Point], degrees: [usize; 3], padding: f64) -> Result<ControlLattice> {
    let (lo, hi) = crate::mesh::bounds_of(points)
        .ok_or_else(|| Error::InvalidArgument("cannot build a lattice around no points".into()))?;
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::InvalidArgument(format!("padding must be >= 0, got {padding}")));
    }
    let mut extent = hi - lo;
    if extent.iter().all(|&e| e == 0.0) {
        return Err(Error::InvalidArgument("input has zero extent on every axis".into()));
    }
    let mut origin = lo;
    for k in 0..3 {
        if extent[k] < 1e-9 {
            origin[k] -= 0.5 * (1e-9 - extent[k]);
            extent[k] = 1e-9;
        }
    }
    let origin = origin - extent * padding;
    let size = extent * (1.0 + 2.0 * padding);
    let mut lattice = ControlLattice::new(
        origin,
        [
            Vector::new(size.x, 0.0, 0.0),
            Vector::new(0.0, size.y, 0.0),
            Vector::new(0.0, 0.0, size.z),
        ],
        degrees,
    )?;
    lattice.padding = padding;
    Ok(lattice)
}

/// Lattice around a mesh's vertices.
pub fn build_lattice_for_mesh(mesh: &Mesh, degrees: [usize; 3], padding: f64) -> Result<ControlLattice> {
    build_lattice(mesh.vertices(), degrees, padding)
}

/// Bernstein polynomials `C(n, k) x^k (1 - x)^(n - k)` for `k = 0..=n`.
pub fn bernstein_basis(degree: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    bernstein_into(degree, x, &mut out);
    out
}

fn bernstein_into(degree: usize, x: f64, out: &mut [f64]) {
    let y = 1.0 - x;
    let mut binom = 1.0;
    for k in 0..=degree {
        out[k] = binom * x.powi(k as i32) * y.powi((degree - k) as i32);
        binom = binom * (degree - k) as f64 / (k + 1) as f64;
    }
}

/// Dense row-major `N x M` matrix of Bernstein tensor weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    outside: usize,
}

impl DeformationMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    /// Number of decomposed points that fell outside the lattice box and
    /// were extrapolated.
    pub fn outside_count(&self) -> usize {
        self.outside
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> DeformationMatrix {
        let mut entries = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            entries.extend_from_slice(self.row(i));
        }
        DeformationMatrix { rows: indices.len(), cols: self.cols, entries, outside: 0 }
    }

    /// `B * points`, one output point per row.
    pub fn multiply(&self, control: &[Point]) -> Result<Vec<Point>> {
        if control.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, got {} control points",
                self.cols,
                control.len()
            )));
        }
        Ok(self
            .entries
            .par_chunks(self.cols.max(1))
            .map(|row| {
                let mut acc = Vector::zeros();
                for (w, p) in row.iter().zip(control) {
                    acc += p.coords * *w;
                }
                Point::from(acc)
            })
            .collect())
    }

    /// `B^T * g`: pulls per-point gradients back onto control points.
    pub fn transpose_multiply(&self, grads: &[Vector]) -> Vec<Vector> {
        let mut out = vec![Vector::zeros(); self.cols];
        for (row, g) in self.entries.chunks(self.cols).zip(grads) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += g * *w;
            }
        }
        out
    }
}

/// Bernstein decomposition of `points` against `lattice`: the matrix `B`
/// such that `B P` reproduces the points for the rest control points `P`.
pub fn decompose(lattice: &ControlLattice, points: &[Point]) -> DeformationMatrix {
    let [l, m, n] = lattice.degrees;
    let cols = lattice.len();
    let mut entries = vec![0.0; points.len() * cols];
    let outside: usize = entries
        .par_chunks_mut(cols)
        .zip(points.par_iter())
        .map(|(row, p)| {
            let [s, t, u] = lattice.local_coordinates(p);
            let bs = bernstein_basis(l, s);
            let bt = bernstein_basis(m, t);
            let bu = bernstein_basis(n, u);
            let mut idx = 0;
            for wi in &bs {
                for wj in &bt {
                    let wij = wi * wj;
                    for wk in &bu {
                        row[idx] = wij * wk;
                        idx += 1;
                    }
                }
            }
            let out = [s, t, u]
                .iter()
                .any(|&c| !(-OUTSIDE_TOLERANCE..=1.0 + OUTSIDE_TOLERANCE).contains(&c));
            usize::from(out)
        })
        .sum();
    if outside > 0 {
        log::warn!("{outside} points lie outside the lattice and are extrapolated");
    }
    DeformationMatrix { rows: points.len(), cols, entries, outside }
}

/// Per-control-point displacement `dP`, an `M x 3` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationDelta {
    values: Vec<Vector>,
}

impl DeformationDelta {
    pub fn zeros(control_points: usize) -> Self {
        Self { values: vec![Vector::zeros(); control_points] }
    }

    pub fn new(values: Vec<Vector>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("delta row {i}")));
        }
        Ok(Self { values })
    }

    /// From a flat `[x0, y0, z0, x1, ...]` slice.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::DimensionMismatch(format!("{} values is not a multiple of 3", flat.len())));
        }
        Self::new(flat.chunks(3).map(|c| Vector::new(c[0], c[1], c[2])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared 2-norm of the flattened displacement.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum()
    }
}

/// Deformed positions `B (P + dP)`, carrying `labels` through unchanged.
pub fn apply_deformation(
    matrix: &DeformationMatrix,
    lattice: &ControlLattice,
    delta: &DeformationDelta,
    labels: Option<&[i64]>,
) -> Result<PointCloud> {
    if delta.len() != lattice.len() || matrix.cols() != lattice.len() {
        return Err(Error::DimensionMismatch(format!(
            "lattice has {} control points, delta {} rows, matrix {} columns",
            lattice.len(),
            delta.len(),
            matrix.cols()
        )));
    }
    let moved: Vec<Point> = lattice
        .control_points
        .iter()
        .zip(&delta.values)
        .map(|(p, d)| p + d)
        .collect();
    let points = matrix.multiply(&moved)?;
    match labels {
        Some(labels) => PointCloud::with_labels(points, labels.to_vec()),
        None => Ok(PointCloud::new(points)),
    }
}

/// Deforms mesh vertices through the lattice; faces are copied unchanged.
pub fn deform_mesh(mesh: &Mesh, lattice: &ControlLattice, delta: &DeformationDelta) -> Result<Mesh> {
    let matrix = decompose(lattice, mesh.vertices());
    let cloud = apply_deformation(&matrix, lattice, delta, None)?;
    mesh.with_vertices(cloud.into_points())
}

/// JSON sidecar stored next to a delta CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMetadata {
    pub degrees: [usize; 3],
    pub origin: [f64; 3],
    pub axes: [[f64; 3]; 3],
    pub padding: f64,
    pub control_points: usize,
    pub ordering: String,
}

/// Path of the JSON sidecar belonging to a delta CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `delta` as an `M x 3` CSV plus a JSON lattice sidecar.
pub fn save_delta(delta: &DeformationDelta, lattice: &ControlLattice, path: &Path) -> Result<()> {
    if delta.len() != lattice.len() {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} rows, lattice {} control points",
            delta.len(),
            lattice.len()
        )));
    }
    let mut out = String::from("dx,dy,dz\n");
    for v in &delta.values {
        let _ = writeln!(out, "{},{},{}", v.x, v.y, v.z);
    }
    fs::write(path, out)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&lattice.metadata())?)?;
    Ok(())
}

/// Reads a delta CSV. The sidecar is returned when present.
pub fn load_delta(path: &Path) -> Result<(DeformationDelta, Option<LatticeMetadata>)> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let cols: Vec<f64> = l
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "invalid number"))?;
        if cols.len() != 3 {
            return Err(Error::parse(path, i + 1, format!("expected 3 columns, got {}", cols.len())));
        }
        values.push(Vector::new(cols[0], cols[1], cols[2]));
    }
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        Some(serde_json::from_str(&fs::read_to_string(sidecar)?)?)
    } else {
        None
    };
    Ok((DeformationDelta::new(values)?, meta))
}
