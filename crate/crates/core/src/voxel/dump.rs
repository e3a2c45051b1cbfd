//! Compact binary dump of a [`VoxelGrid`].
//!
//! Layout (all integers little-endian):
//!
//! | offset      | size | content                                         |
//! |-------------|------|-------------------------------------------------|
//! | 0           | 4    | magic `VXG1`                                    |
//! | 4           | 4    | `u32` length `n` of the JSON header             |
//! | 8           | n    | UTF-8 JSON: `origin`, `cell_size`, `dims`, `order` |
//! | 8 + n       | N    | one class byte per cell, `N = nx * ny * nz`     |
//!
//! Class bytes: 0 empty, 1 building, 2 canopy, 3 terrain. Cells are stored
//! x-fastest: `index = ix + nx * (iy + ny * iz)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CellClass, VoxelGrid};
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"VXG1";

#[derive(Serialize, Deserialize)]
struct Header {
    origin: [f64; 3],
    cell_size: f64,
    dims: [usize; 3],
    order: String,
}

pub fn write_grid(grid: &VoxelGrid, mut w: impl Write) -> std::io::Result<()> {
    let header = Header {
        origin: grid.origin(),
        cell_size: grid.cell_size(),
        dims: grid.dims(),
        order: "x-fastest".into(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let body: Vec<u8> = grid.cells().iter().map(|c| *c as u8).collect();
    w.write_all(&body)
}

pub fn read_grid(mut r: impl Read) -> Result<VoxelGrid> {
    let bad = |msg: String| Error::InvalidArgument(format!("voxel dump: {msg}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
    if &magic != GRID_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|e| bad(e.to_string()))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(|e| bad(e.to_string()))?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.order != "x-fastest" {
        return Err(bad(format!("unsupported cell order {:?}", header.order)));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| bad(e.to_string()))?;
    let cells = body
        .iter()
        .map(|&b| CellClass::from_code(b).ok_or_else(|| bad(format!("unknown class byte {b}"))))
        .collect::<Result<Vec<_>>>()?;
    VoxelGrid::from_parts(header.origin, header.cell_size, header.dims, cells)
}
