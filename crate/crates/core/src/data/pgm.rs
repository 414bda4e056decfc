//! Binary 8-bit PGM (P5) frames and frame directories.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::VideoSequence;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P5") {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut number = |what: &str| -> Result<usize> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(bad(&format!("only 8-bit frames (maxval 255) are supported, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = width * height;
    let have = bytes.len().saturating_sub(start);
    if have < need {
        return Err(bad(&format!("expected {need} pixel bytes, found {have}")));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[start..start + need].to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    if image.pixels.len() != image.width * image.height {
        return Err(Error::dims(
            "write_pgm",
            format!("{} pixels for a {}x{} image", image.pixels.len(), image.width, image.height),
        ));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Orders names so embedded digit runs compare numerically
/// (`f2.pgm < f10.pgm`); zero-padded names keep their lexicographic order.
pub(crate) fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, dx), (true, dy)) => {
                let (tx, ty) = (dx.trim_start_matches('0'), dy.trim_start_matches('0'));
                tx.len().cmp(&ty.len()).then_with(|| tx.cmp(ty)).then_with(|| dx.len().cmp(&dy.len()))
            }
            ((_, sx), (_, sy)) => sx.cmp(sy),
        };
        if ord.is_ne() {
            return ord;
        }
    }
    ca.len().cmp(&cb.len())
}

fn name_of(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every `*.pgm` in `dir` in natural filename order. Pixels are
/// scaled by `1/255`. The directory name is the subject id and its parent's
/// name the family id.
pub fn load_video_dir(dir: &Path) -> Result<VideoSequence> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            files.push(p);
        }
    }
    if files.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no .pgm frames found", dir.display())));
    }
    files.sort_by(|a, b| natural_cmp(&name_of(a), &name_of(b)));
    let images: Vec<GrayImage> = files.iter().map(|f| read_pgm(f)).collect::<Result<_>>()?;
    let (w0, h0) = (images[0].width, images[0].height);
    let offenders: Vec<String> = files
        .iter()
        .zip(&images)
        .filter(|(_, im)| (im.width, im.height) != (w0, h0))
        .map(|(f, im)| format!("{} ({}x{})", name_of(f), im.width, im.height))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Format(format!(
            "{}: frames differ from {w0}x{h0}: {}",
            dir.display(),
            offenders.join(", ")
        )));
    }
    let frames = images
        .into_iter()
        .map(|im| im.pixels.into_iter().map(|p| f64::from(p) / 255.0).collect())
        .collect();
    let subject = name_of(dir);
    let family = dir.parent().map(name_of).unwrap_or_default();
    VideoSequence::new(frames, subject, family)
}

/// Picks a square raster when `frame_dim` is a perfect square, otherwise a
/// single row.
pub(crate) fn frame_shape(frame_dim: usize) -> (usize, usize) {
    let side = (frame_dim as f64).sqrt().round() as usize;
    if side * side == frame_dim {
        (side, side)
    } else {
        (frame_dim, 1)
    }
}

/// Writes frames as `frame_0000.pgm, frame_0001.pgm, ...`, quantizing each
/// value to the nearest of 256 levels.
pub fn write_video_dir(dir: &Path, video: &VideoSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (width, height) = frame_shape(video.frame_dim());
    for (k, frame) in video.frames().iter().enumerate() {
        let pixels = frame
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_pgm(
            &dir.join(format!("frame_{k:04}.pgm")),
            &GrayImage { width, height, pixels },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cmp::Ordering;

    #[test]
    fn natural_order() {
        assert_eq!(natural_cmp("f2.pgm", "f10.pgm"), Ordering::Less);
        assert_eq!(natural_cmp("0002.pgm", "0010.pgm"), Ordering::Less);
        assert_eq!(natural_cmp("a.pgm", "b.pgm"), Ordering::Less);
        assert_eq!(natural_cmp("x1", "x1"), Ordering::Equal);
    }

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        let im = parse_pgm(&bytes, Path::new("x.pgm")).unwrap();
        assert_eq!((im.width, im.height, im.pixels), (2, 1, vec![7, 200]));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0", Path::new("a")).is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x01\x02", Path::new("a")).is_err());
        assert!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00", Path::new("a")).is_err());
    }

    #[test]
    fn shape_choice() {
        assert_eq!(frame_shape(256), (16, 16));
        assert_eq!(frame_shape(12), (12, 1));
    }
}
