//! Uniform voxel occupancy grid and line-of-sight queries over it.
//!
//! Cells are indexed `(ix, iy, iz)` with `x` east, `y` north and `z` up;
//! cell `(i, j, k)` spans `origin + [i, i+1) * cell_size` on each axis.

mod dump;
pub mod scene;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Landmark, PanoramaMeta, Point2};
pub use dump::{read_grid, write_grid, GRID_MAGIC};
pub use scene::{AsciiGrid, Footprint, Rect, SceneInputs};

/// Default edge length of a voxel, meters.
pub const DEFAULT_CELL_SIZE: f64 = 5.0;
pub const DEFAULT_EYE_HEIGHT: f64 = 1.6;
pub const DEFAULT_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum CellClass {
    Empty = 0,
    Building = 1,
    Canopy = 2,
    Terrain = 3,
}

impl CellClass {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Empty),
            1 => Some(Self::Building),
            2 => Some(Self::Canopy),
            3 => Some(Self::Terrain),
            _ => None,
        }
    }
}

/// Which occupied classes stop a sight line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMask {
    pub building: bool,
    pub canopy: bool,
    pub terrain: bool,
}

impl Default for ClassMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl ClassMask {
    pub const ALL: ClassMask = ClassMask {
        building: true,
        canopy: true,
        terrain: true,
    };

    pub fn blocks(&self, class: CellClass) -> bool {
        match class {
            CellClass::Empty => false,
            CellClass::Building => self.building,
            CellClass::Canopy => self.canopy,
            CellClass::Terrain => self.terrain,
        }
    }
}

pub type CellIndex = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: [f64; 3],
    cell_size: f64,
    dims: [usize; 3],
    cells: Vec<CellClass>,
}

impl VoxelGrid {
    /// An all-empty grid.
    pub fn new(origin: [f64; 3], cell_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::invalid(format!("cell size {cell_size} must be positive")));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("grid dims {dims:?} must be positive")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::invalid(format!("grid dims {dims:?} overflow")))?;
        Ok(Self {
            origin,
            cell_size,
            dims,
            cells: vec![CellClass::Empty; len],
        })
    }

    pub(crate) fn from_parts(origin: [f64; 3], cell_size: f64, dims: [usize; 3], cells: Vec<CellClass>) -> Result<Self> {
        let mut g = Self::new(origin, cell_size, dims)?;
        if cells.len() != g.cells.len() {
            return Err(Error::invalid(format!(
                "occupancy length {} does not match dims {dims:?}",
                cells.len()
            )));
        }
        g.cells = cells;
        Ok(g)
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cells(&self) -> &[CellClass] {
        &self.cells
    }

    /// Upper corner of the grid.
    pub fn max_corner(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + self.dims[a] as f64 * self.cell_size)
    }

    fn index(&self, c: CellIndex) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn get(&self, c: CellIndex) -> CellClass {
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: CellIndex, class: CellClass) {
        let i = self.index(c);
        self.cells[i] = class;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c != CellClass::Empty).count()
    }

    /// Cell containing `p`; points on the upper faces map to the last cell.
    pub fn cell_of(&self, p: [f64; 3]) -> Option<CellIndex> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let rel = (p[a] - self.origin[a]) / self.cell_size;
            if !(rel >= 0.0) || rel > self.dims[a] as f64 {
                return None;
            }
            out[a] = (rel.floor() as usize).min(self.dims[a] - 1);
        }
        Some(out)
    }

    /// Planar column containing `p`.
    pub fn column_of(&self, p: Point2) -> Option<[usize; 2]> {
        self.cell_of([p.x, p.y, self.origin[2]]).map(|c| [c[0], c[1]])
    }

    /// Top of the highest terrain cell in a column, or the grid floor.
    pub fn ground_height(&self, col: [usize; 2]) -> f64 {
        (0..self.dims[2])
            .rev()
            .find(|&k| self.get([col[0], col[1], k]) == CellClass::Terrain)
            .map(|k| self.origin[2] + (k + 1) as f64 * self.cell_size)
            .unwrap_or(self.origin[2])
    }

    pub fn los(&self, from: [f64; 3], to: [f64; 3]) -> bool {
        self.los_with(from, to, ClassMask::ALL, |_| false)
    }

    /// Line of sight between two points. Every cell pierced by the segment
    /// is visited; the cells holding either endpoint never block, nor does
    /// any cell for which `ignore` returns true.
    pub fn los_with(&self, from: [f64; 3], to: [f64; 3], mask: ClassMask, ignore: impl Fn(CellIndex) -> bool) -> bool {
        // walk in a canonical direction so los(a, b) == los(b, a) bit for bit
        let (a, b) = if lex_less(&to, &from) { (to, from) } else { (from, to) };
        let ends = [self.cell_of(a), self.cell_of(b)];
        let blocks = |c: CellIndex| {
            Some(c) != ends[0] && Some(c) != ends[1] && !ignore(c) && mask.blocks(self.get(c))
        };
        self.walk(a, b, blocks).is_none()
    }

    /// Visits cells pierced by the segment `a -> b` in order and returns
    /// the first one for which `hit` is true.
    pub fn walk(&self, a: [f64; 3], b: [f64; 3], mut hit: impl FnMut(CellIndex) -> bool) -> Option<CellIndex> {
        let dir: [f64; 3] = std::array::from_fn(|i| b[i] - a[i]);
        let lo = self.origin;
        let hi = self.max_corner();

        // clip the parameter range [0, 1] to the grid box
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if dir[i] == 0.0 {
                if a[i] < lo[i] || a[i] > hi[i] {
                    return None;
                }
            } else {
                let ta = (lo[i] - a[i]) / dir[i];
                let tb = (hi[i] - a[i]) / dir[i];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
        }
        if t0 > t1 {
            return None;
        }

        let start: [f64; 3] = std::array::from_fn(|i| a[i] + dir[i] * t0);
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            let rel = ((start[i] - lo[i]) / self.cell_size).floor();
            cell[i] = (rel.max(0.0) as i64).min(self.dims[i] as i64 - 1);
            if dir[i] > 0.0 {
                step[i] = 1;
                let boundary = lo[i] + (cell[i] + 1) as f64 * self.cell_size;
                t_max[i] = (boundary - a[i]) / dir[i];
                t_delta[i] = self.cell_size / dir[i];
            } else if dir[i] < 0.0 {
                step[i] = -1;
                let boundary = lo[i] + cell[i] as f64 * self.cell_size;
                t_max[i] = (boundary - a[i]) / dir[i];
                t_delta[i] = -self.cell_size / dir[i];
            }
        }

        loop {
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            if hit(c) {
                return Some(c);
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] >= t1 {
                return None;
            }
            cell[axis] += step[axis];
            if cell[axis] < 0 || cell[axis] >= self.dims[axis] as i64 {
                return None;
            }
            t_max[axis] += t_delta[axis];
        }
    }
}

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

/// Voxelizes `scene` over `bounds`.
///
/// A column is classified at its centre: cells whose centre lies below the
/// ground elevation are terrain, then building up to `ground + height`,
/// then canopy up to `ground + canopy_height`. Without a terrain raster the
/// ground is `z = 0` and no terrain cells are produced.
pub fn build_grid(scene: &SceneInputs, cell_size: f64, bounds: Rect) -> Result<VoxelGrid> {
    if bounds.is_empty() {
        return Err(Error::invalid("grid bounds are empty"));
    }
    if !(cell_size > 0.0) {
        return Err(Error::invalid(format!("cell size {cell_size} must be positive")));
    }
    scene.check_crs()?;

    let nx = ((bounds.max_x - bounds.min_x) / cell_size).ceil() as usize;
    let ny = ((bounds.max_y - bounds.min_y) / cell_size).ceil() as usize;

    struct Column {
        ground: f64,
        building: f64,
        canopy: f64,
    }
    let mut columns = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let c = Point2::new(
                bounds.min_x + (ix as f64 + 0.5) * cell_size,
                bounds.min_y + (iy as f64 + 0.5) * cell_size,
            );
            let ground = scene.terrain.as_ref().and_then(|t| t.sample(c)).unwrap_or(0.0);
            let building = scene
                .buildings
                .iter()
                .filter(|f| f.contains(c))
                .map(|f| f.height)
                .fold(0.0, f64::max);
            let canopy = scene
                .canopy
                .as_ref()
                .and_then(|r| r.sample(c))
                .unwrap_or(0.0)
                .max(0.0);
            columns.push(Column { ground, building, canopy });
        }
    }

    let has_terrain = scene.terrain.is_some();
    let z_min = if has_terrain {
        let lowest = columns.iter().map(|c| c.ground).fold(f64::INFINITY, f64::min);
        ((lowest / cell_size).floor() - 1.0) * cell_size
    } else {
        0.0
    };
    let z_top = columns
        .iter()
        .map(|c| c.ground + c.building.max(c.canopy))
        .fold(z_min + cell_size, f64::max);
    let nz = ((z_top - z_min) / cell_size).ceil().max(1.0) as usize;

    let mut grid = VoxelGrid::new([bounds.min_x, bounds.min_y, z_min], cell_size, [nx, ny, nz])?;
    for iy in 0..ny {
        for ix in 0..nx {
            let col = &columns[iy * nx + ix];
            for iz in 0..nz {
                let z = z_min + (iz as f64 + 0.5) * cell_size;
                let class = if has_terrain && z < col.ground {
                    CellClass::Terrain
                } else if z < col.ground + col.building {
                    CellClass::Building
                } else if z < col.ground + col.canopy {
                    CellClass::Canopy
                } else {
                    continue;
                };
                grid.set([ix, iy, iz], class);
            }
        }
    }
    Ok(grid)
}

/// Observer and landmark sampling for 3D visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosOptions {
    /// Observer eye height above the ground of its column.
    pub eye_height: f64,
    /// Points sampled up the landmark axis, the top one at the apex.
    pub n_samples: usize,
    pub mask: ClassMask,
}

impl Default for LosOptions {
    fn default() -> Self {
        Self {
            eye_height: DEFAULT_EYE_HEIGHT,
            n_samples: DEFAULT_SAMPLES,
            mask: ClassMask::ALL,
        }
    }
}

/// True when any of `n_samples` points evenly spaced up the landmark axis
/// (`ground + H*i/n` for `i = 1..=n`) has a clear sight line from the
/// observer's eye. Cells in the landmark's own column never block.
pub fn landmark_visible_3d(grid: &VoxelGrid, observer: Point2, landmark: &Landmark, opts: &LosOptions) -> Result<bool> {
    if opts.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let lm_col = grid
        .column_of(landmark.location)
        .ok_or_else(|| Error::OutOfBounds(format!("landmark {} lies outside the voxel grid", landmark.landmark_id)))?;
    let obs_col = grid
        .column_of(observer)
        .ok_or_else(|| Error::OutOfBounds(format!("observer ({}, {}) lies outside the voxel grid", observer.x, observer.y)))?;

    let eye = [observer.x, observer.y, grid.ground_height(obs_col) + opts.eye_height];
    let base = grid.ground_height(lm_col);
    let n = opts.n_samples as f64;
    let visible = (1..=opts.n_samples).any(|i| {
        let target = [landmark.location.x, landmark.location.y, base + landmark.height * i as f64 / n];
        grid.los_with(eye, target, opts.mask, |c| c[0] == lm_col[0] && c[1] == lm_col[1])
    });
    Ok(visible)
}

/// 3D visibility of `landmark` at every panorama location, index-aligned with `panos`.
pub fn simulate_visibility(
    grid: &VoxelGrid,
    panos: &[PanoramaMeta],
    landmark: &Landmark,
    opts: &LosOptions,
) -> Result<Vec<bool>> {
    panos
        .par_iter()
        .map(|p| landmark_visible_3d(grid, p.location, landmark, opts))
        .collect()
}
