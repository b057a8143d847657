//! Field export: CSV with one row per time node, and a raw binary dump.
//!
//! The binary layout is a 16-byte header (`b"HEATGOH1"`, then `nx` and the
//! number of time steps as little-endian `u32`) followed by the field in
//! row-major order as little-endian `f64`, boundary columns included.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::problem::{Field, Grid};

pub const MAGIC: [u8; 8] = *b"HEATGOH1";

/// Writes `t,x_0,...,x_{nx+1}` rows.
pub fn write_field_csv<W: Write>(grid: &Grid, field: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(grid.x.iter().map(|x| format!("x={x}")));
    w.write_record(&header)?;
    for (k, row) in field.rows().into_iter().enumerate() {
        let mut rec = vec![grid.t[k].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let (rows, cols) = field.dim();
    if cols < 2 || rows == 0 {
        return Err(Error::Shape(format!("cannot dump a {rows}x{cols} field")));
    }
    out.write_all(&MAGIC)?;
    out.write_all(&((cols - 2) as u32).to_le_bytes())?;
    out.write_all(&((rows - 1) as u32).to_le_bytes())?;
    for v in field.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut input: R) -> Result<Field> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..8] != MAGIC {
        return Err(Error::Shape("bad magic in field dump".into()));
    }
    let nx = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let nt = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (nt + 1, nx + 2);
    let mut bytes = vec![0u8; rows * cols * 8];
    input.read_exact(&mut bytes)?;
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Field::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn binary_roundtrip() {
        let f = Field::from_shape_fn((5, 7), |(k, i)| (k * 7 + i) as f64 * 0.25 - 1.0);
        let mut buf = Vec::new();
        write_field_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 35 * 8);
        assert_eq!(&buf[..8], b"HEATGOH1");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        assert_eq!(read_field_binary(&buf[..]).unwrap(), f);
        buf[0] = b'X';
        assert!(read_field_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_has_row_per_node() {
        let spec = example::example_spec();
        let grid = Grid::uniform(&spec, 8, 16).unwrap();
        let f = Field::zeros((grid.n_times(), grid.n_space()));
        let mut buf = Vec::new();
        write_field_csv(&grid, &f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + grid.n_times());
        assert_eq!(text.lines().next().unwrap().split(',').count(), 1 + grid.n_space());
    }
}
