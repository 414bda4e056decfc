//! Reading and writing frames, pair lists and IDX digit files, splitting
//! pairs by family, and generating synthetic kin videos.

mod idx;
mod pairs;
mod pgm;
mod synthetic;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub use idx::{load_idx_images, load_idx_labels, load_mnist_idx, write_idx_images, write_idx_labels};
pub use pairs::{
    family_groups, family_of, load_pair_list, pair_list_csv, partition_subject_disjoint, write_pair_list,
    PairRecord,
};
pub use pgm::{load_video_dir, read_pgm, write_pgm, write_video_dir, GrayImage};
pub use synthetic::{
    gen_synthetic_kin, generate_synthetic, write_synthetic, SyntheticConfig, SyntheticDataset,
};

use crate::error::Result;
use crate::pipeline::VideoSequence;

/// A pair with both videos loaded.
#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub a: VideoSequence,
    pub b: VideoSequence,
    pub kin: bool,
}

/// Loads the videos of every pair below `root`, reading each directory once.
pub fn load_pairs(root: &Path, pairs: &[PairRecord]) -> Result<Vec<LabeledPair>> {
    let mut cache: HashMap<PathBuf, VideoSequence> = HashMap::new();
    let mut get = |rel: &Path| -> Result<VideoSequence> {
        if let Some(v) = cache.get(rel) {
            return Ok(v.clone());
        }
        let v = load_video_dir(&root.join(rel))?;
        cache.insert(rel.to_path_buf(), v.clone());
        Ok(v)
    };
    pairs
        .iter()
        .map(|p| {
            Ok(LabeledPair {
                a: get(&p.video_a)?,
                b: get(&p.video_b)?,
                kin: p.kin,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_dir_examples() {
        let dir = tempfile::tempdir().unwrap();
        let subj = dir.path().join("famA").join("kid");
        std::fs::create_dir_all(&subj).unwrap();
        // Sentinel first pixel tells the frames apart.
        for (name, sentinel) in [("0010.pgm", 30u8), ("0001.pgm", 10), ("0002.pgm", 20)] {
            let mut pixels = vec![0u8; 16];
            pixels[0] = sentinel;
            pixels[15] = 255;
            write_pgm(&subj.join(name), &GrayImage { width: 4, height: 4, pixels }).unwrap();
        }
        std::fs::write(subj.join("notes.txt"), "ignored").unwrap();
        let v = load_video_dir(&subj).unwrap();
        assert_eq!((v.len(), v.frame_dim()), (3, 16));
        let firsts: Vec<f64> = v.frames().iter().map(|f| f[0] * 255.0).collect();
        assert_eq!(firsts, vec![10.0, 20.0, 30.0]);
        assert_eq!(v.frames()[0][15], 1.0);
        assert_eq!((v.subject_id.as_str(), v.family_id.as_str()), ("kid", "famA"));
    }

    #[test]
    fn mixed_dimensions_list_offenders() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), &GrayImage { width: 2, height: 2, pixels: vec![0; 4] }).unwrap();
        write_pgm(&dir.path().join("b.pgm"), &GrayImage { width: 3, height: 1, pixels: vec![0; 3] }).unwrap();
        let e = load_video_dir(dir.path()).unwrap_err().to_string();
        assert!(e.contains("b.pgm"), "{e}");
    }

    #[test]
    fn unreadable_and_empty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_video_dir(dir.path()).is_err());
        let e = load_video_dir(&dir.path().join("missing")).unwrap_err().to_string();
        assert!(e.contains("missing"), "{e}");
    }

    #[test]
    fn pixel_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..9).map(|i| ((k * 37 + i * 29) % 256) as f64 / 255.0).collect())
            .collect();
        let v = VideoSequence::new(frames, "s", "f").unwrap();
        let path = dir.path().join("f").join("s");
        write_video_dir(&path, &v).unwrap();
        assert_eq!(load_video_dir(&path).unwrap(), v);
    }
}
