//! IDX binary format (the MNIST distribution envelope).
//!
//! Header: magic `[0x00, 0x00, dtype, rank]` followed by `rank` big-endian
//! u32 extents, then the row-major payload. Only dtype 0x08 (unsigned byte)
//! is supported: images use magic 0x00000803 (rank 3), labels 0x00000801
//! (rank 1). Images are scaled to `[0, 1]` reals at load time; labels load
//! as plain integers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const DTYPE_U8: u8 = 0x08;

/// Decodes the header and payload of an IDX byte stream.
pub fn parse_idx_bytes(bytes: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::format_at("file shorter than the 4-byte magic", bytes.len()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format_at(
            format!("bad magic: first two bytes {:#04x} {:#04x} must be zero", bytes[0], bytes[1]),
            0,
        ));
    }
    if bytes[2] != DTYPE_U8 {
        return Err(Error::format_at(
            format!("unsupported dtype code {:#04x} (only 0x08 unsigned byte)", bytes[2]),
            2,
        ));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::format_at("rank 0 is not meaningful", 3));
    }
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::format_at(
            format!("header needs {header_len} bytes for rank {rank}, found {}", bytes.len()),
            bytes.len(),
        ));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 4 + 4 * i;
        let extent = u32::from_be_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
        dims.push(extent as usize);
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(Error::format_at(
            format!(
                "payload for dims {dims:?} needs {expected} bytes, found {} ({} missing)",
                payload.len(),
                expected.saturating_sub(payload.len())
            ),
            bytes.len(),
        ));
    }
    Ok((dims, payload))
}

/// Rank-3 image file to a `[n, rows, cols]` tensor scaled by 1/255.
pub fn parse_idx_images<S: Scalar>(bytes: &[u8]) -> Result<Tensor<S>> {
    let (dims, payload) = parse_idx_bytes(bytes)?;
    if dims.len() != 3 {
        return Err(Error::format(format!("image file must be rank 3, got rank {}", dims.len())));
    }
    let scale = S::from_f(1.0 / 255.0);
    let data = payload.iter().map(|&b| S::from_f(b as f64) * scale).collect();
    Tensor::new(&dims, data)
}

/// Rank-1 label file to plain integers.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (dims, payload) = parse_idx_bytes(bytes)?;
    if dims.len() != 1 {
        return Err(Error::format(format!("label file must be rank 1, got rank {}", dims.len())));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn load_idx_images<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    parse_idx_images(&fs::read(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    parse_idx_labels(&fs::read(path)?)
}

/// Writes `[n, rows, cols]` (or flat `[n, side²]` with square sides) image
/// data as an IDX rank-3 u8 file, quantizing `[0, 1]` reals to bytes.
pub fn write_idx_images<S: Scalar>(images: &Tensor<S>, path: &Path) -> Result<()> {
    let dims: Vec<usize> = match images.shape() {
        &[n, r, c] => vec![n, r, c],
        &[n, d] => {
            let side = (d as f64).sqrt() as usize;
            if side * side != d {
                return Err(Error::dimension(format!("flat width {d} is not a square image")));
            }
            vec![n, side, side]
        }
        other => return Err(Error::dimension(format!("image tensor must be rank 2 or 3, got {other:?}"))),
    };
    let mut bytes = Vec::with_capacity(4 + 12 + images.len());
    bytes.extend_from_slice(&[0, 0, DTYPE_U8, 3]);
    for d in &dims {
        bytes.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    for &v in images.data() {
        let q = (v.to_f().clamp(0.0, 1.0) * 255.0).round() as u8;
        bytes.push(q);
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_idx_labels(labels: &[usize], path: &Path) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l > 255) {
        return Err(Error::parameter(format!("label {bad} does not fit a byte")));
    }
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&[0, 0, DTYPE_U8, 1]);
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend(labels.iter().map(|&l| l as u8));
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built fixture: two 2x2 images with known bytes.
    fn image_fixture() -> Vec<u8> {
        let mut bytes = vec![0, 0, 0x08, 3];
        for dim in [2u32, 2, 2] {
            bytes.extend_from_slice(&dim.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255, 0, 255]);
        bytes
    }

    #[test]
    fn fixture_decodes_bit_exactly() {
        let t: Tensor<f64> = parse_idx_images(&image_fixture()).unwrap();
        assert_eq!(t.shape(), &[2, 2, 2]);
        let want = [0.0, 51.0, 102.0, 153.0, 204.0, 255.0, 0.0, 255.0];
        for (got, w) in t.data().iter().zip(want) {
            assert_eq!(*got, w / 255.0);
        }
    }

    #[test]
    fn header_shape_is_decoded() {
        let mut bytes = vec![0, 0, 0x08, 3];
        for dim in [60_000u32, 28, 28] {
            bytes.extend_from_slice(&dim.to_be_bytes());
        }
        // Payload intentionally missing: only the header decode is checked.
        let err = parse_idx_bytes(&bytes).unwrap_err();
        let Error::Format { message, .. } = err else { panic!("wrong error kind") };
        assert!(message.contains("[60000, 28, 28]"), "{message}");
    }

    #[test]
    fn truncated_payload_names_missing_length() {
        let mut bytes = image_fixture();
        bytes.pop();
        let err = parse_idx_bytes(&bytes).unwrap_err();
        let Error::Format { message, offset } = err else { panic!("wrong error kind") };
        assert!(message.contains("1 missing"), "{message}");
        assert_eq!(offset, Some(bytes.len()));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = image_fixture();
        bytes[0] = 9;
        assert!(matches!(parse_idx_bytes(&bytes), Err(Error::Format { .. })));
        let mut bytes = image_fixture();
        bytes[2] = 0x0D; // float dtype unsupported
        assert!(matches!(parse_idx_bytes(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn labels_roundtrip_through_files() {
        let dir = std::env::temp_dir().join(format!("confidae-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("labels-idx1-ubyte");
        let labels = vec![3usize, 1, 4, 1, 5, 9, 2, 6];
        write_idx_labels(&labels, &path).unwrap();
        assert_eq!(load_idx_labels(&path).unwrap(), labels);
        std::fs::remove_dir_all(&dir).ok();
    }
}
