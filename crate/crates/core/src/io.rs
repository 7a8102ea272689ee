//! Field files: a 32-byte little-endian header followed by interleaved
//! `(re, im)` samples in row-major order.
//!
//! | offset | size | content                           |
//! |--------|------|-----------------------------------|
//! | 0      | 8    | magic `BLTFIELD`                  |
//! | 8      | 8    | `n` as `u64`                      |
//! | 16     | 8    | `L` as `f64`                      |
//! | 24     | 4    | dtype: 1 = complex64, 2 = complex128 |
//! | 28     | 4    | reserved, zero                    |

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 8] = b"BLTFIELD";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Complex64,
    Complex128,
}

impl Precision {
    fn code(self) -> u32 {
        match self {
            Precision::Complex64 => 1,
            Precision::Complex128 => 2,
        }
    }
}

pub fn write_field<W: Write>(field: &Field, precision: Precision, mut w: W) -> Result<()> {
    let grid = field.grid();
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    header.extend_from_slice(&grid.half_side().to_le_bytes());
    header.extend_from_slice(&precision.code().to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    w.write_all(&header)?;
    let width = match precision {
        Precision::Complex64 => 8,
        Precision::Complex128 => 16,
    };
    let mut body = Vec::with_capacity(field.values().len() * width);
    for v in field.values() {
        match precision {
            Precision::Complex64 => {
                body.extend_from_slice(&(v.re as f32).to_le_bytes());
                body.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            Precision::Complex128 => {
                body.extend_from_slice(&v.re.to_le_bytes());
                body.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R, tag: &str) -> Result<Field> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[0..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let half_side = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let dtype = u32::from_le_bytes(header[24..28].try_into().expect("4 bytes"));
    let grid = Grid::new(n, half_side)?;
    let width = match dtype {
        1 => 8,
        2 => 16,
        other => return Err(Error::Format(format!("unknown dtype {other}"))),
    };
    let mut body = vec![0u8; grid.len() * width];
    r.read_exact(&mut body)?;
    let values = body
        .chunks_exact(width)
        .map(|c| {
            if dtype == 1 {
                let re = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
                let im = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
                Complex64::new(re as f64, im as f64)
            } else {
                let re = f64::from_le_bytes(c[0..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..16].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            }
        })
        .collect();
    Field::new(grid, values, tag)
}

/// Plotting export with columns `x,y,re,im`.
pub fn write_csv<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let grid = field.grid();
    let mut out = String::from("x,y,re,im\n");
    for (i, v) in field.values().iter().enumerate() {
        let z = grid.point_at(i);
        out.push_str(&format!("{},{},{},{}\n", z.re, z.im, v.re, v.im));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
