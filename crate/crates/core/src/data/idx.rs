//! The IDX container: two zero bytes, a type byte (0x08 = unsigned byte),
//! a dimension count, that many big-endian u32 sizes, then the row-major
//! payload.

use std::path::Path;

use super::{DataError, DataKind, Dataset};

const UNSIGNED_BYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedFile {
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic[0] != 0 || magic[1] != 0 || magic[2] != UNSIGNED_BYTE || magic[3] == 0 {
        return Err(DataError::BadMagic(magic));
    }
    let ndim = magic[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(DataError::TruncatedFile {
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(DataError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::DimensionMismatch(format!(
            "{} trailing bytes after a {:?} payload",
            bytes.len() - expected,
            dims
        )));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = vec![0, 0, UNSIGNED_BYTE, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

pub fn read_idx(path: &Path) -> Result<IdxArray, DataError> {
    parse_idx(&std::fs::read(path)?)
}

/// Pairs an image file (`N × ...`) with a label file (`N`).
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray) -> Result<Dataset, DataError> {
    if images.dims.len() < 2 {
        return Err(DataError::DimensionMismatch(format!("image array has shape {:?}", images.dims)));
    }
    if labels.dims.len() != 1 {
        return Err(DataError::DimensionMismatch(format!("label array has shape {:?}", labels.dims)));
    }
    if images.dims[0] != labels.dims[0] {
        return Err(DataError::DimensionMismatch(format!(
            "{} images but {} labels",
            images.dims[0], labels.dims[0]
        )));
    }
    let dim = images.dims[1..].iter().product();
    let items = images.data.iter().map(|&b| b as f64).collect();
    let labels = labels.data.iter().map(|&b| b as usize).collect();
    Dataset::new(dim, DataKind::Pixels { levels: 256 }, items, labels)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    dataset_from_idx(&read_idx(images)?, &read_idx(labels)?)
}
