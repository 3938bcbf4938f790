//! Little-endian binary layouts for matrices and fitted models.
//!
//! Matrix layout, all integers little-endian:
//!
//! ```text
//! magic   "RBCSR"   5 bytes
//! version u8        (currently 1)
//! flags   u16       bit 0: value array present
//! n_rows  u64
//! n_cols  u64
//! nnz     u64
//! offsets u64 x (n_rows + 1)
//! indices u32 x nnz
//! values  f64 x nnz   (only when flag bit 0 is set)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const MATRIX_MAGIC: &[u8; 5] = b"RBCSR";
const MATRIX_VERSION: u8 = 1;
const FLAG_VALUES: u16 = 1;

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub(crate) fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_bytes(r: &mut impl Read, limit: usize) -> Result<Vec<u8>> {
    let len = read_u64(r)? as usize;
    if len > limit {
        return Err(Error::Malformed(format!("field of {len} bytes exceeds {limit}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn checked_len(v: u64, what: &str) -> Result<usize> {
    // Guards allocations against corrupt headers.
    const LIMIT: u64 = 1 << 40;
    if v > LIMIT {
        return Err(Error::Malformed(format!("{what} {v} is implausibly large")));
    }
    Ok(v as usize)
}

pub fn write_matrix(m: &CsrMatrix, w: &mut impl Write) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&[MATRIX_VERSION])?;
    let flags = if m.values().is_some() { FLAG_VALUES } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    write_u64(w, m.n_rows() as u64)?;
    write_u64(w, m.n_cols() as u64)?;
    write_u64(w, m.nnz() as u64)?;
    for &o in m.row_offsets() {
        write_u64(w, o as u64)?;
    }
    for &c in m.col_indices() {
        w.write_all(&c.to_le_bytes())?;
    }
    if let Some(values) = m.values() {
        write_f64s(w, values)?;
    }
    Ok(())
}

pub fn read_matrix(r: &mut impl Read) -> Result<CsrMatrix> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Malformed("not a matrix file (bad magic)".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != MATRIX_VERSION {
        return Err(Error::Malformed(format!(
            "unsupported matrix version {}",
            version[0]
        )));
    }
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let flags = u16::from_le_bytes(flags);
    let n_rows = checked_len(read_u64(r)?, "row count")?;
    let n_cols = checked_len(read_u64(r)?, "column count")?;
    let nnz = checked_len(read_u64(r)?, "nnz")?;
    let mut offsets = Vec::with_capacity(n_rows + 1);
    for _ in 0..=n_rows {
        offsets.push(read_u64(r)? as usize);
    }
    let mut indices = Vec::with_capacity(nnz);
    let mut buf = [0u8; 4];
    for _ in 0..nnz {
        r.read_exact(&mut buf)?;
        indices.push(u32::from_le_bytes(buf));
    }
    let values = if flags & FLAG_VALUES != 0 {
        Some(read_f64s(r, nnz)?)
    } else {
        None
    };
    CsrMatrix::from_parts(n_rows, n_cols, offsets, indices, values)
}

pub fn matrix_to_bytes(m: &CsrMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.heap_bytes() + 64);
    write_matrix(m, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn save_matrix(m: &CsrMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix(m, &mut w)?;
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<CsrMatrix> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_matrix(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_little_endian() {
        let m = CsrMatrix::build(&[(0, 1, 1.0)], 2, 3).unwrap();
        let bytes = matrix_to_bytes(&m);
        assert_eq!(&bytes[..5], b"RBCSR");
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..8], &[0, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        // binary: header + 3 offsets + 1 index, no values
        assert_eq!(bytes.len(), 32 + 3 * 8 + 4);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_matrix(&mut &b"NOTAMATRIX"[..]).is_err());
        let m = CsrMatrix::build(&[(0, 1, 2.0)], 2, 3).unwrap();
        let bytes = matrix_to_bytes(&m);
        assert!(read_matrix(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(recs in prop::collection::vec((0usize..6, 0usize..7, 0.0f64..3.0), 0..40)) {
            let m = CsrMatrix::build(&recs, 6, 7).unwrap();
            let back = read_matrix(&mut &matrix_to_bytes(&m)[..]).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
