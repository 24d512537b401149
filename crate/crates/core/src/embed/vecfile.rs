//! Binary vector file format.
//!
//! Layout: 16-byte header — magic `SVEC` (4 bytes), dimension `d` as u32 LE,
//! vector count as u64 LE — followed by `count * d` little-endian f32
//! values, row after row.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SVEC";

pub fn write_vectors(path: &Path, d: usize, rows: &[Vec<f32>]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + rows.len() * d * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        if row.len() != d {
            return Err(Error::Contract(format!(
                "vector of length {} in file of dim {d}",
                row.len()
            )));
        }
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::util::atomic_write(path, &buf)
}

pub fn read_vectors(path: &Path) -> Result<(usize, Vec<Vec<f32>>)> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    file.read_to_end(&mut body)?;
    let expected = count * d * 4;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} payload bytes, found {}",
            path.display(),
            body.len()
        )));
    }
    let mut rows = Vec::with_capacity(count);
    let mut offset = 0;
    for _ in 0..count {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            row.push(f32::from_le_bytes(body[offset..offset + 4].try_into().unwrap()));
            offset += 4;
        }
        rows.push(row);
    }
    Ok((d, rows))
}

/// Write a single vector (cache record).
pub fn write_single(path: &Path, values: &[f32]) -> Result<()> {
    write_vectors(path, values.len(), std::slice::from_ref(&values.to_vec()))
}

/// Read a single-vector file, erroring when it holds any other count.
pub fn read_single(path: &Path) -> Result<Vec<f32>> {
    let (_, mut rows) = read_vectors(path)?;
    if rows.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected one vector, found {}",
            path.display(),
            rows.len()
        )));
    }
    Ok(rows.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        let rows = vec![vec![0.1f32, -2.5, 3.75], vec![f32::MIN_POSITIVE, 0.0, 1e30]];
        write_vectors(&path, 3, &rows).unwrap();
        let (d, loaded) = read_vectors(&path).unwrap();
        assert_eq!(d, 3);
        for (a, b) in rows.iter().flatten().zip(loaded.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        write_vectors(&path, 2, &[vec![1.0, 2.0]]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_vectors(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vec");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        assert!(matches!(read_vectors(&path), Err(Error::Format(_))));
    }
}
