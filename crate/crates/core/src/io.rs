//! Little-endian binary dumps.
//!
//! Field: `u32 dim`, `u32 N`, `f64 L`, then `N^dim` pairs of `f64 (re, im)`
//! in row-major order. Trajectory: the field header, `u32 frames`, `f64 dt`,
//! `f64 t0`, then each frame's values in the same interleaved layout.

use std::io::{Read, Write};

use crate::error::{QlsError, Result};
use crate::grid::{Grid, StateField, Trajectory, C64};

fn write_header<W: Write>(w: &mut W, g: &Grid) -> Result<()> {
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&g.half_length().to_le_bytes())?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<Grid> {
    let dim = read_u32(r)? as usize;
    let n = read_u32(r)? as usize;
    let l = read_f64(r)?;
    Grid::new(dim, l, n)
}

fn read_values<R: Read>(r: &mut R, len: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; len * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

pub fn write_field<W: Write>(w: &mut W, f: &StateField) -> Result<()> {
    write_header(w, f.grid())?;
    write_values(w, f.values())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<StateField> {
    let g = read_header(r)?;
    let values = read_values(r, g.len())?;
    StateField::new(g, values, 0.0)
}

pub fn write_trajectory<W: Write>(w: &mut W, tr: &Trajectory) -> Result<()> {
    write_header(w, tr.grid())?;
    w.write_all(&(tr.len() as u32).to_le_bytes())?;
    w.write_all(&tr.dt().to_le_bytes())?;
    w.write_all(&tr.start_time().to_le_bytes())?;
    for f in tr.frames() {
        write_values(w, f.values())?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    let g = read_header(r)?;
    let count = read_u32(r)? as usize;
    if count == 0 {
        return Err(QlsError::EmptyTrajectory);
    }
    let dt = read_f64(r)?;
    let t0 = read_f64(r)?;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let values = read_values(r, g.len())?;
        frames.push(StateField::new(g.clone(), values, t0 + i as f64 * dt)?);
    }
    Trajectory::new(frames, dt)
}
