//! Binary matrix file format shared by mel spectrograms and attention
//! matrices: 16-byte header (magic, rows, cols, 4 reserved bytes) followed
//! by row-major 32-bit little-endian floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::DspError;

pub const MATRIX_MAGIC: [u8; 4] = *b"CFM1";

pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<(), DspError> {
    let (rows, cols) = matrix.dim();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&MATRIX_MAGIC)?;
    out.write_all(&(rows as u32).to_le_bytes())?;
    out.write_all(&(cols as u32).to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    for &v in matrix.iter() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, DspError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    reader
        .read_exact(&mut header)
        .map_err(|_| DspError::BadMatrixFile {
            path: path.to_path_buf(),
            detail: "truncated header".into(),
        })?;
    if header[0..4] != MATRIX_MAGIC {
        return Err(DspError::BadMatrixFile {
            path: path.to_path_buf(),
            detail: format!("bad magic {:?}", &header[0..4]),
        });
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; rows * cols * 4];
    reader
        .read_exact(&mut payload)
        .map_err(|_| DspError::BadMatrixFile {
            path: path.to_path_buf(),
            detail: format!("truncated payload, expected {} x {}", rows, cols),
        })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(DspError::BadMatrixFile {
            path: path.to_path_buf(),
            detail: "trailing bytes after payload".into(),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| DspError::BadMatrixFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
