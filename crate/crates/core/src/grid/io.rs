//! Field files.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! b"PWF1" | u32 n | u32 size × n | u32 m | m × len × (f64 re, f64 im)
//! ```
//!
//! Payload values are grid-point values, component-major, points in
//! row-major order (last axis fastest).

use std::io::{self, Read, Write};

use num_complex::Complex64 as C64;
use thiserror::Error;

use super::{Grid, GridError, SpectralField, VectorField};

const MAGIC: &[u8; 4] = b"PWF1";

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field file (bad magic)")]
    Magic,
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub fn write_fields(mut w: impl Write, u: &VectorField) -> io::Result<()> {
    let g = u.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for &s in g.sizes() {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(u.len() as u32).to_le_bytes())?;
    for c in u.components() {
        for v in c.phys() {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_fields(mut r: impl Read) -> Result<VectorField, FieldIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FieldIoError::Magic);
    }
    let n = read_u32(&mut r)? as usize;
    if n == 0 || n > 2 {
        return Err(GridError::Dimension(n).into());
    }
    let sizes = (0..n).map(|_| read_u32(&mut r).map(|s| s as usize)).collect::<io::Result<Vec<_>>>()?;
    let grid = Grid::new(&sizes)?;
    let m = read_u32(&mut r)? as usize;
    let mut comps = Vec::with_capacity(m);
    for _ in 0..m {
        let phys = (0..grid.len())
            .map(|_| Ok(C64::new(read_f64(&mut r)?, read_f64(&mut r)?)))
            .collect::<io::Result<Vec<_>>>()?;
        comps.push(SpectralField::from_physical(&grid, phys)?);
    }
    Ok(VectorField::new(comps)?)
}

/// One row per grid point: coordinates, then re/im of each component.
pub fn write_csv(mut w: impl Write, u: &VectorField) -> io::Result<()> {
    let g = u.grid();
    let axes = ["x1", "x2"];
    let mut header: Vec<String> = axes[..g.dim()].iter().map(|s| s.to_string()).collect();
    for c in 0..u.len() {
        header.push(format!("re{c}"));
        header.push(format!("im{c}"));
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..g.len() {
        let mut row: Vec<String> = g.point(i).iter().map(|v| format!("{v:.17e}")).collect();
        for c in u.components() {
            row.push(format!("{:.17e}", c.phys()[i].re));
            row.push(format!("{:.17e}", c.phys()[i].im));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
