//! Solid voxelization of triangle meshes and intersection-over-union.
//!
//! A cell is occupied when the surface passes through its interior, or when
//! no 6-connected path of free cells leads from it to the outside of the
//! grid. Paths may not cross a cell face that the surface covers, which
//! matters for faces lying exactly on grid planes.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::{Error, Point, Result, Vector};

/// Fraction added on every side of the bounding cube of a default frame.
pub const DEFAULT_FRAME_MARGIN: f64 = 0.02;

/// Cells are shrunk by this fraction of their size before overlap tests, so
/// geometry that only touches a cell's boundary does not occupy it.
const CELL_SHRINK: f64 = 1e-9;

/// Placement of a cubic grid in model space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelFrame {
    pub origin: Point,
    pub cell_size: f64,
}

impl VoxelFrame {
    /// Bounding cube of `points`, centred on their bounding box, grown by
    /// `margin` times its side on every side and divided into `resolution`
    /// cells per axis.
    pub fn around(points: &[Point], resolution: usize, margin: f64) -> Result<Self> {
        let (lo, hi) = crate::mesh::bounds_of(points)
            .ok_or_else(|| Error::InvalidMesh("cannot frame an empty point set".into()))?;
        if resolution == 0 {
            return Err(Error::InvalidArgument("resolution must be >= 1".into()));
        }
        let center = Point::from((lo.coords + hi.coords) * 0.5);
        let side = (hi - lo).max().max(1e-9) * (1.0 + 2.0 * margin);
        Ok(Self {
            origin: center - Vector::repeat(side * 0.5),
            cell_size: side / resolution as f64,
        })
    }
}

/// `R x R x R` boolean occupancy, stored x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    frame: VoxelFrame,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(resolution: usize, frame: VoxelFrame, occupancy: Vec<bool>) -> Result<Self> {
        if resolution == 0 || occupancy.len() != resolution.pow(3) {
            return Err(Error::DimensionMismatch(format!(
                "resolution {resolution} needs {} cells, got {}",
                resolution.pow(3),
                occupancy.len()
            )));
        }
        if !(frame.cell_size > 0.0) {
            return Err(Error::InvalidArgument("cell size must be positive".into()));
        }
        Ok(Self { resolution, frame, occupancy })
    }

    pub fn empty(resolution: usize, frame: VoxelFrame) -> Self {
        Self { resolution, frame, occupancy: vec![false; resolution.pow(3)] }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn frame(&self) -> VoxelFrame {
        self.frame
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Volume of the occupied cells.
    pub fn occupied_volume(&self) -> f64 {
        self.occupied_count() as f64 * self.frame.cell_size.powi(3)
    }

    fn coords(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }

    /// Marks every free cell that cannot reach the grid boundary through
    /// free cells as occupied.
    pub fn fill_enclosed(&self) -> VoxelGrid {
        let blocked = BlockedFaces::new(self.resolution);
        let mut out = self.clone();
        out.occupancy = flood_fill(self, &blocked);
        out
    }

    pub fn same_frame(&self, other: &VoxelGrid) -> bool {
        self.resolution == other.resolution && self.frame == other.frame
    }
}

/// Cell faces covered by coplanar surface, per axis: `(R+1) x R x R` flags
/// indexed by plane, then the two remaining axes in cyclic order.
struct BlockedFaces {
    resolution: usize,
    flags: [Vec<bool>; 3],
}

impl BlockedFaces {
    fn new(resolution: usize) -> Self {
        let n = (resolution + 1) * resolution * resolution;
        Self { resolution, flags: [vec![false; n], vec![false; n], vec![false; n]] }
    }

    fn index(&self, axis: usize, plane: usize, cell: [usize; 3]) -> usize {
        let r = self.resolution;
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        (plane * r + cell[b]) * r + cell[c]
    }

    fn is_blocked(&self, axis: usize, plane: usize, cell: [usize; 3]) -> bool {
        self.flags[axis][self.index(axis, plane, cell)]
    }

    fn block(&mut self, axis: usize, plane: usize, cell: [usize; 3]) {
        let i = self.index(axis, plane, cell);
        self.flags[axis][i] = true;
    }
}

/// Voxelizes `mesh` on an `R^3` grid, in `frame` or in the mesh's own
/// bounding cube grown by [`DEFAULT_FRAME_MARGIN`].
pub fn voxelize(mesh: &Mesh, resolution: usize, frame: Option<VoxelFrame>) -> Result<VoxelGrid> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be >= 1".into()));
    }
    let frame = match frame {
        Some(f) => f,
        None => VoxelFrame::around(mesh.vertices(), resolution, DEFAULT_FRAME_MARGIN)?,
    };
    let mut grid = VoxelGrid::new(resolution, frame, vec![false; resolution.pow(3)])?;
    let mut blocked = BlockedFaces::new(resolution);
    let cell = frame.cell_size;
    let half = 0.5 * cell * (1.0 - 2.0 * CELL_SHRINK);

    for f in 0..mesh.faces().len() {
        // triangle in grid units relative to the frame origin
        let tri = mesh.triangle(f).map(|p| (p - frame.origin) / cell);
        let lo = Vector::from_fn(|k, _| tri.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min));
        let hi = Vector::from_fn(|k, _| tri.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max));
        if (0..3).any(|k| hi[k] < 0.0 || lo[k] > resolution as f64) {
            continue;
        }
        let range = |k: usize| {
            let a = (lo[k].floor().max(0.0) as usize).min(resolution - 1);
            let b = (hi[k].floor().max(0.0) as usize).min(resolution - 1);
            a..=b
        };
        let tri_cells = tri.map(|v| v * cell);
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    if grid.get(x, y, z) {
                        continue;
                    }
                    let center = Vector::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * cell;
                    let local = tri_cells.map(|v| v - center);
                    if triangle_box_overlap(&local, half) {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
        block_coplanar(&tri, resolution, &mut blocked);
    }

    grid.occupancy = flood_fill(&grid, &blocked);
    Ok(grid)
}

/// Records grid-cell faces covered by a triangle lying in a grid plane.
fn block_coplanar(tri: &[Vector; 3], resolution: usize, blocked: &mut BlockedFaces) {
    for axis in 0..3 {
        let plane = tri[0][axis].round();
        if !tri.iter().all(|v| (v[axis] - plane).abs() < 1e-9) {
            continue;
        }
        if plane < 0.0 || plane > resolution as f64 {
            continue;
        }
        let plane = plane as usize;
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let flat = tri.map(|v| Vector2::new(v[b], v[c]));
        let area2 = (flat[1] - flat[0]).perp(&(flat[2] - flat[0]));
        if area2.abs() < 1e-18 {
            continue;
        }
        let span = |k: usize| {
            let lo = flat.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
            let hi = flat.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
            if hi < 0.0 || lo > resolution as f64 {
                return None;
            }
            let a = (lo.floor().max(0.0) as usize).min(resolution - 1);
            let b = (hi.floor().max(0.0) as usize).min(resolution - 1);
            Some(a..=b)
        };
        let (Some(rb), Some(rc)) = (span(0), span(1)) else {
            continue;
        };
        let half = 0.5 - CELL_SHRINK;
        for ub in rb {
            for uc in rc.clone() {
                let center = Vector2::new(ub as f64 + 0.5, uc as f64 + 0.5);
                let local = flat.map(|v| v - center);
                if triangle_square_overlap(&local, half) {
                    let mut cell = [0; 3];
                    cell[b] = ub;
                    cell[c] = uc;
                    blocked.block(axis, plane, cell);
                }
            }
        }
    }
}

/// Breadth-first search from the grid boundary through free cells; returns
/// occupancy with every unreached cell set.
fn flood_fill(grid: &VoxelGrid, blocked: &BlockedFaces) -> Vec<bool> {
    let r = grid.resolution;
    let mut reached = vec![false; grid.occupancy.len()];
    let mut queue = VecDeque::new();
    for index in 0..grid.occupancy.len() {
        if grid.occupancy[index] {
            continue;
        }
        let c = grid.coords(index);
        let open_boundary = (0..3).any(|a| {
            (c[a] == 0 && !blocked.is_blocked(a, 0, c)) || (c[a] == r - 1 && !blocked.is_blocked(a, r, c))
        });
        if open_boundary {
            reached[index] = true;
            queue.push_back(index);
        }
    }
    while let Some(index) = queue.pop_front() {
        let c = grid.coords(index);
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let next = c[axis] as i64 + step;
                if next < 0 || next >= r as i64 {
                    continue;
                }
                let plane = if step > 0 { c[axis] + 1 } else { c[axis] };
                if blocked.is_blocked(axis, plane, c) {
                    continue;
                }
                let mut n = c;
                n[axis] = next as usize;
                let ni = grid.index(n[0], n[1], n[2]);
                if !grid.occupancy[ni] && !reached[ni] {
                    reached[ni] = true;
                    queue.push_back(ni);
                }
            }
        }
    }
    reached.iter().map(|&r| !r).collect()
}

/// Separating-axis test between a triangle and the cube `[-h, h]^3`.
pub fn triangle_box_overlap(tri: &[Vector; 3], h: f64) -> bool {
    let [v0, v1, v2] = tri;
    let edges = [v1 - v0, v2 - v1, v0 - v2];
    let units = [Vector::x(), Vector::y(), Vector::z()];
    let separated = |axis: &Vector| {
        let p = [axis.dot(v0), axis.dot(v1), axis.dot(v2)];
        let r = h * (axis.x.abs() + axis.y.abs() + axis.z.abs());
        let min = p[0].min(p[1]).min(p[2]);
        let max = p[0].max(p[1]).max(p[2]);
        min > r || max < -r
    };
    for e in &edges {
        for u in &units {
            if separated(&e.cross(u)) {
                return false;
            }
        }
    }
    for u in &units {
        if separated(u) {
            return false;
        }
    }
    let normal = edges[0].cross(&edges[1]);
    !separated(&normal)
}

/// Separating-axis test between a 2D triangle and the square `[-h, h]^2`.
fn triangle_square_overlap(tri: &[Vector2<f64>; 3], h: f64) -> bool {
    let separated = |axis: Vector2<f64>| {
        let p = tri.map(|v| axis.dot(&v));
        let r = h * (axis.x.abs() + axis.y.abs());
        let min = p[0].min(p[1]).min(p[2]);
        let max = p[0].max(p[1]).max(p[2]);
        min > r || max < -r
    };
    if separated(Vector2::x()) || separated(Vector2::y()) {
        return false;
    }
    for i in 0..3 {
        let e = tri[(i + 1) % 3] - tri[i];
        if separated(Vector2::new(-e.y, e.x)) {
            return false;
        }
    }
    true
}

/// Intersection over union of two grids sharing a frame. Two empty grids
/// score 1.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if !a.same_frame(b) {
        return Err(Error::DimensionMismatch(
            "IoU needs grids with equal resolution and frame".into(),
        ));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy.iter().zip(&b.occupancy) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Serialize, Deserialize)]
struct VoxelHeader {
    format: String,
    resolution: usize,
    origin: [f64; 3],
    cell_size: f64,
    bit_order: String,
    occupied: usize,
}

#[derive(Serialize, Deserialize)]
struct VoxelFile {
    header: VoxelHeader,
    /// Alternating run lengths, starting with a (possibly empty) run of free
    /// cells.
    runs: Vec<usize>,
}

const VOXEL_FORMAT: &str = "ffd-voxels-rle/1";

/// Writes a grid as JSON: a header plus run-length encoded occupancy.
pub fn save_voxels(grid: &VoxelGrid, path: &Path) -> Result<()> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0usize;
    for &cell in &grid.occupancy {
        if cell == current {
            count += 1;
        } else {
            runs.push(count);
            current = cell;
            count = 1;
        }
    }
    runs.push(count);
    let file = VoxelFile {
        header: VoxelHeader {
            format: VOXEL_FORMAT.into(),
            resolution: grid.resolution,
            origin: grid.frame.origin.coords.into(),
            cell_size: grid.frame.cell_size,
            bit_order: "x fastest, then y, then z".into(),
            occupied: grid.occupied_count(),
        },
        runs,
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_voxels(path: &Path) -> Result<VoxelGrid> {
    let file: VoxelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.header.format != VOXEL_FORMAT {
        return Err(Error::parse(path, 1, format!("unknown format '{}'", file.header.format)));
    }
    let mut occupancy = Vec::with_capacity(file.header.resolution.pow(3));
    let mut value = false;
    for run in file.runs {
        occupancy.extend(std::iter::repeat_n(value, run));
        value = !value;
    }
    VoxelGrid::new(
        file.header.resolution,
        VoxelFrame { origin: Point::from(file.header.origin), cell_size: file.header.cell_size },
        occupancy,
    )
}
