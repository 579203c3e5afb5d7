//! Minimal NPY (NumPy array file) support for 2D arrays.
//!
//! Only what the SLP pressure maps need: C-order 2D arrays of `<f8`, `<f4`,
//! `<i8`, or `<i4`. The writer always emits `<f8` and exists mainly so tests
//! can fabricate SLP-layout fixtures.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::DataError;

const MAGIC: &[u8] = b"\x93NUMPY";

fn parse_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Read a 2D array from an `.npy` file.
pub fn read_npy_2d(path: &Path) -> Result<Array2<f64>, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(parse_err(path, "not an NPY file"));
    }
    let major = bytes[6];
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(parse_err(path, "truncated header"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(parse_err(path, format!("unsupported NPY version {v}"))),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(parse_err(path, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| parse_err(path, "non-utf8 header"))?;

    let descr = extract_str_field(header, "descr")
        .ok_or_else(|| parse_err(path, "missing descr"))?;
    if extract_bool_field(header, "fortran_order").unwrap_or(false) {
        return Err(parse_err(path, "fortran_order arrays not supported"));
    }
    let shape = extract_shape(header).ok_or_else(|| parse_err(path, "missing shape"))?;
    if shape.len() != 2 {
        return Err(parse_err(path, format!("expected 2D array, got {shape:?}")));
    }
    let (rows, cols) = (shape[0], shape[1]);
    let n = rows * cols;

    let data = &bytes[data_start..];
    let values: Vec<f64> = match descr.as_str() {
        "<f8" | "|f8" => read_scalars(data, n, 8, path, |b| f64::from_le_bytes(b.try_into().unwrap()))?,
        "<f4" | "|f4" => read_scalars(data, n, 4, path, |b| {
            f32::from_le_bytes(b.try_into().unwrap()) as f64
        })?,
        "<i8" => read_scalars(data, n, 8, path, |b| {
            i64::from_le_bytes(b.try_into().unwrap()) as f64
        })?,
        "<i4" => read_scalars(data, n, 4, path, |b| {
            i32::from_le_bytes(b.try_into().unwrap()) as f64
        })?,
        other => return Err(parse_err(path, format!("unsupported dtype {other}"))),
    };
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| parse_err(path, e.to_string()))
}

fn read_scalars(
    data: &[u8],
    n: usize,
    width: usize,
    path: &Path,
    convert: impl Fn(&[u8]) -> f64,
) -> Result<Vec<f64>, DataError> {
    if data.len() < n * width {
        return Err(parse_err(path, "truncated data section"));
    }
    Ok(data[..n * width].chunks_exact(width).map(convert).collect())
}

fn extract_str_field(header: &str, key: &str) -> Option<String> {
    let idx = header.find(&format!("'{key}'"))?;
    // past the quoted key, the next quoted token is the value
    let rest = &header[idx + key.len() + 2..];
    let open = rest.find(['\'', '"'])? + 1;
    let rest = &rest[open..];
    let close = rest.find(['\'', '"'])?;
    Some(rest[..close].to_string())
}

fn extract_bool_field(header: &str, key: &str) -> Option<bool> {
    let idx = header.find(&format!("'{key}'"))?;
    let rest = &header[idx + key.len() + 2..];
    if rest.trim_start().starts_with(": True") || rest.trim_start().starts_with(":True") {
        return Some(true);
    }
    Some(false)
}

fn extract_shape(header: &str) -> Option<Vec<usize>> {
    let idx = header.find("'shape'")?;
    let rest = &header[idx..];
    let open = rest.find('(')?;
    let close = rest.find(')')?;
    let inner = &rest[open + 1..close];
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect();
    Some(dims)
}

/// Write a 2D array as a version-1.0 `<f8` C-order `.npy` file.
pub fn write_npy_2d(path: &Path, array: &Array2<f64>) -> Result<(), DataError> {
    let header_body = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        array.nrows(),
        array.ncols()
    );
    // pad with spaces so that (10 + header_len) % 64 == 0, newline-terminated
    let unpadded = 10 + header_body.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    let header = format!("{header_body}{}\n", " ".repeat(padding));

    let mut bytes = Vec::with_capacity(10 + header.len() + array.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.push(1);
    bytes.push(0);
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in array.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::TempDir;

    #[test]
    fn npy_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("a.npy");
        let a = array![[1.0, 2.5, 3.25], [4.0, 0.0, 6.125]];
        write_npy_2d(&path, &a).unwrap();
        let b = read_npy_2d(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("bad.npy");
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        write_npy_2d(&path, &a).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_npy_2d(&path).is_err());
    }

    #[test]
    fn rejects_non_npy() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("x.npy");
        fs::write(&path, b"hello world, definitely not numpy").unwrap();
        assert!(read_npy_2d(&path).is_err());
    }
}
