//! Binary PGM (P5) image emission.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Writes a `[rows, cols]` image with values in `[0, 1]` as binary PGM,
/// quantized to `round(v · 255)` after clamping.
pub fn write_pgm<S: Scalar>(image: &Tensor<S>, path: &Path) -> Result<()> {
    let (rows, cols) = image.dims2()?;
    if !image.all_finite() {
        return Err(Error::parameter("image contains NaN or infinite values"));
    }
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.reserve(image.len());
    for &v in image.data() {
        bytes.push((v.to_f().clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_is_header_plus_zero_bytes() {
        let dir = std::env::temp_dir().join(format!("confidae-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("zeros.pgm");
        let image = Tensor::<f64>::zeros(&[28, 28]);
        write_pgm(&image, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n28 28\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len() - header.len(), 784);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn nan_pixels_are_rejected() {
        let image = Tensor::new(&[1, 2], vec![0.5, f64::NAN]).unwrap();
        let path = std::env::temp_dir().join("never-written.pgm");
        assert!(matches!(write_pgm(&image, &path), Err(Error::Parameter(_))));
    }
}
