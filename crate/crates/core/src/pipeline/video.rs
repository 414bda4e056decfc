use crate::error::{Error, Result};

/// A face video as a list of flattened grayscale frames in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Vec<f64>>,
    frame_dim: usize,
    pub subject_id: String,
    pub family_id: String,
}

impl VideoSequence {
    /// Checks that there is at least one frame and that all frames share a
    /// length.
    pub fn new(
        frames: Vec<Vec<f64>>,
        subject_id: impl Into<String>,
        family_id: impl Into<String>,
    ) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InsufficientData("a video needs at least one frame".into()));
        };
        let frame_dim = first.len();
        if frame_dim == 0 {
            return Err(Error::InvalidParameter("frames must be nonempty".into()));
        }
        let bad: Vec<usize> = frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.len() != frame_dim)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::dims(
                "VideoSequence",
                format!("frames {bad:?} differ from frame 0 length {frame_dim}"),
            ));
        }
        Ok(Self {
            frames,
            frame_dim,
            subject_id: subject_id.into(),
            family_id: family_id.into(),
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A window of `2z + 1` consecutive frames; the pivot is the middle one.
#[derive(Clone, Debug, PartialEq)]
pub struct Vidlet {
    pub frames: Vec<Vec<f64>>,
    pub pivot_index: usize,
    pub source_offset: usize,
}

impl Vidlet {
    pub fn z(&self) -> usize {
        self.pivot_index
    }

    pub fn pivot(&self) -> &[f64] {
        &self.frames[self.pivot_index]
    }
}

/// Splits a video into non-overlapping windows of `2z + 1` frames starting
/// at frame 0. A trailing remainder that does not fill a window is dropped.
pub fn extract_vidlets(video: &VideoSequence, z: usize) -> Result<Vec<Vidlet>> {
    if z == 0 {
        return Err(Error::InvalidParameter("z must be >= 1".into()));
    }
    let width = 2 * z + 1;
    if video.len() < width {
        return Err(Error::InsufficientData(format!(
            "video '{}' has {} frames but a vidlet needs {width}; cycle-align it with a longer video first",
            video.subject_id,
            video.len()
        )));
    }
    Ok(video
        .frames
        .chunks_exact(width)
        .enumerate()
        .map(|(k, chunk)| Vidlet {
            frames: chunk.to_vec(),
            pivot_index: z,
            source_offset: k * width,
        })
        .collect())
}

/// Repeats the shorter video's frames cyclically from its start until both
/// have the same length.
pub fn cycle_align(a: &VideoSequence, b: &VideoSequence) -> (VideoSequence, VideoSequence) {
    fn stretch(v: &VideoSequence, n: usize) -> VideoSequence {
        VideoSequence {
            frames: (0..n).map(|i| v.frames[i % v.len()].clone()).collect(),
            ..v.clone()
        }
    }
    let n = a.len().max(b.len());
    (stretch(a, n), stretch(b, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(n: usize, dim: usize) -> VideoSequence {
        let frames = (0..n).map(|i| vec![i as f64; dim]).collect();
        VideoSequence::new(frames, "s", "f").unwrap()
    }

    fn ids(v: &VideoSequence) -> Vec<usize> {
        v.frames().iter().map(|f| f[0] as usize).collect()
    }

    #[test]
    fn ten_frames_two_vidlets() {
        let vl = extract_vidlets(&video(10, 2), 2).unwrap();
        assert_eq!(vl.len(), 2);
        assert_eq!(vl[0].pivot()[0], 2.0);
        assert_eq!(vl[1].pivot()[0], 7.0);
        assert_eq!(vl[1].source_offset, 5);
        assert_eq!(vl[1].frames.last().unwrap()[0], 9.0);
    }

    #[test]
    fn exact_and_remainder() {
        assert_eq!(extract_vidlets(&video(7, 1), 3).unwrap().len(), 1);
        let vl = extract_vidlets(&video(12, 1), 2).unwrap();
        assert_eq!(vl.len(), 2);
        assert_eq!(vl[1].frames.last().unwrap()[0], 9.0);
    }

    #[test]
    fn short_video_and_zero_z_rejected() {
        let err = extract_vidlets(&video(4, 1), 2).unwrap_err();
        assert!(err.to_string().contains("cycle"));
        assert!(extract_vidlets(&video(4, 1), 0).is_err());
    }

    #[test]
    fn cycle_examples() {
        let (a, b) = cycle_align(&video(5, 1), &video(3, 1));
        assert_eq!(ids(&a), vec![0, 1, 2, 3, 4]);
        assert_eq!(ids(&b), vec![0, 1, 2, 0, 1]);
        let (a, b) = cycle_align(&video(4, 1), &video(4, 1));
        assert_eq!((ids(&a), ids(&b)), (vec![0, 1, 2, 3], vec![0, 1, 2, 3]));
        let (a, b) = cycle_align(&video(2, 1), &video(7, 1));
        assert_eq!(ids(&a), vec![0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(b.len(), 7);
    }

    #[test]
    fn construction_validates() {
        assert!(VideoSequence::new(vec![], "s", "f").is_err());
        assert!(VideoSequence::new(vec![vec![0.0; 3], vec![0.0; 2]], "s", "f").is_err());
    }

    proptest! {
        #[test]
        fn windows_tile_prefix(n in 3usize..60, z in 1usize..4) {
            prop_assume!(n >= 2 * z + 1);
            let vl = extract_vidlets(&video(n, 1), z).unwrap();
            let w = 2 * z + 1;
            prop_assert_eq!(vl.len(), n / w);
            let covered: Vec<usize> = vl.iter().flat_map(|v| v.frames.iter().map(|f| f[0] as usize)).collect();
            prop_assert_eq!(covered, (0..vl.len() * w).collect::<Vec<_>>());
        }
    }
}
