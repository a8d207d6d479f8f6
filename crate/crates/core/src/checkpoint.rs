//! Binary field checkpoints.
//!
//! Layout (little endian): magic `GPE1`; `u32` n1, n2, n3; `f64` L1, L2, L3;
//! `f64` t; then n1*n2*n3 `(re, im)` `f64` pairs in storage order (x3 fastest).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{GpeError, Result};
use crate::field::{Representation, SpectralField};
use crate::grid::Grid3;

pub const MAGIC: &[u8; 4] = b"GPE1";

pub fn write_checkpoint<W: Write>(mut w: W, field: &SpectralField, t: f64) -> Result<()> {
    let field = field.to_physical();
    let g = field.grid();
    w.write_all(MAGIC)?;
    for n in g.n() {
        let n = u32::try_from(n).map_err(|_| GpeError::Format("grid too large".into()))?;
        w.write_all(&n.to_le_bytes())?;
    }
    for l in g.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&t.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * g.len_total());
    for v in field.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint, returning the field (physical) and its time stamp.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(SpectralField, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GpeError::Format(format!("bad magic {magic:?}")));
    }
    let mut n = [0usize; 3];
    for slot in &mut n {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *slot = u32::from_le_bytes(b) as usize;
    }
    let mut len = [0f64; 3];
    for slot in &mut len {
        *slot = read_f64(&mut r)?;
    }
    let t = read_f64(&mut r)?;
    let grid = Arc::new(Grid3::new(n, len)?);
    let total = grid.len_total();
    let mut raw = vec![0u8; 16 * total];
    r.read_exact(&mut raw)
        .map_err(|e| GpeError::Format(format!("truncated payload: {e}")))?;
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(GpeError::Format("trailing bytes after payload".into()));
    }
    Ok((SpectralField::new(grid, values, Representation::Physical)?, t))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn save(path: impl AsRef<Path>, field: &SpectralField, t: f64) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, field, t)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(SpectralField, f64)> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let g = Arc::new(Grid3::new([8, 8, 10], [1.0, 2.0, 3.0]).unwrap());
        let f = SpectralField::from_fn(g.clone(), |x| Complex64::new(x[0], -x[2]));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &f, 0.5).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 32 + 16 * 640);
        assert_eq!(&buf[..4], b"GPE1");
        assert_eq!(&buf[4..8], &8u32.to_le_bytes());
        assert_eq!(&buf[12..16], &10u32.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[40..48], &0.5f64.to_le_bytes());
        // second value is node (0,0,1): x3 fastest
        let v1 = f.values()[1];
        assert_eq!(&buf[48 + 16..48 + 24], &v1.re.to_le_bytes());
        assert_eq!(&buf[48 + 24..48 + 32], &v1.im.to_le_bytes());

        let (back, t) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(t, 0.5);
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid().n(), [8, 8, 10]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint(&b"GPE2"[..]).is_err());
        let g = Arc::new(Grid3::cube(8, 1.0).unwrap());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &SpectralField::zeros(g), 0.0).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        buf.push(0);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
