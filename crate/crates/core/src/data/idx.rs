//! IDX image and label files (the MNIST byte layout).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_len(path: &Path, bytes: &[u8], need: usize) -> Result<()> {
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "{}: expected {need} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(())
}

/// Reads an image file into one column per image, scaled to `[0, 1]`.
pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::Format(format!(
            "{}: expected at least 16 header bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let magic = be_u32(&bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    let (rows, cols) = (be_u32(&bytes, 8) as usize, be_u32(&bytes, 12) as usize);
    let dim = rows * cols;
    check_len(path, &bytes, 16 + n * dim)?;
    // The file is image-major, which is exactly the column-major layout of
    // a `dim x n` matrix; transpose out of a row-major `n x dim` view.
    let data: Vec<f64> = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Matrix::from_vec(n, dim, data)?.transpose())
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "{}: expected at least 8 header bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let magic = be_u32(&bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    check_len(path, &bytes, 8 + n)?;
    Ok(bytes[8..].to_vec())
}

/// Images as columns in `[0, 1]` and their labels; the two counts must agree
/// and labels must be digits.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<(Matrix, Vec<u8>)> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.cols() != y.len() {
        return Err(Error::dims(
            "load_mnist_idx",
            format!("{} images but {} labels", x.cols(), y.len()),
        ));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("{}: label {bad} is not a digit", labels.display())));
    }
    Ok((x, y))
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        if im.len() != rows * cols {
            return Err(Error::dims("write_idx_images", format!("image of {} bytes, expected {}", im.len(), rows * cols)));
        }
        out.extend_from_slice(im);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let images = vec![vec![0u8, 255, 10, 20, 30, 40], vec![1, 2, 3, 4, 5, 6]];
        write_idx_images(&ip, 2, 3, &images).unwrap();
        write_idx_labels(&lp, &[7, 3]).unwrap();
        let (x, y) = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(x.shape(), (6, 2));
        assert_eq!(x.get(1, 0), 1.0);
        assert_eq!(x.get(5, 1), 6.0 / 255.0);
        assert_eq!(y, vec![7, 3]);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        write_idx_images(&ip, 2, 2, &[vec![1, 2, 3, 4]]).unwrap();
        let mut bytes = fs::read(&ip).unwrap();
        bytes.pop();
        fs::write(&ip, &bytes).unwrap();
        let e = load_idx_images(&ip).unwrap_err().to_string();
        assert!(e.contains("expected 20 bytes, found 19"), "{e}");

        let lp = dir.path().join("l");
        write_idx_labels(&lp, &[1; 8]).unwrap();
        assert!(load_idx_images(&lp).unwrap_err().to_string().contains("magic"));
        assert!(load_idx_labels(&ip).is_err());
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx_images(&ip, 1, 1, &[vec![1]]).unwrap();
        write_idx_labels(&lp, &[1, 2]).unwrap();
        assert!(load_mnist_idx(&ip, &lp).is_err());
    }
}
