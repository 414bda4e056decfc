//! Pair lists and family-disjoint splitting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::Seed;

/// One row of a pair list. Paths are relative to the data root and follow
/// `family_id/subject_id`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairRecord {
    pub video_a: PathBuf,
    pub video_b: PathBuf,
    pub kin: bool,
    pub relation: Option<String>,
}

impl PairRecord {
    pub fn family_a(&self) -> Result<String> {
        family_of(&self.video_a)
    }

    pub fn family_b(&self) -> Result<String> {
        family_of(&self.video_b)
    }
}

/// The name of the directory containing the subject directory.
pub fn family_of(video: &Path) -> Result<String> {
    video
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| {
            Error::Format(format!(
                "'{}' does not follow family_id/subject_id",
                video.display()
            ))
        })
}

fn parse_pair_list(text: &str, source: &str) -> Result<Vec<PairRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::Format(format!("{source}: empty pair list")));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_relation = match cols.as_slice() {
        ["video_a", "video_b", "label"] => false,
        ["video_a", "video_b", "label", "relation"] => true,
        _ => {
            return Err(Error::Format(format!(
                "{source} line 1: header must be video_a,video_b,label[,relation], got '{header}'"
            )))
        }
    };
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |msg: String| Error::Format(format!("{source} line {lineno}: {msg}"));
        let expected = if with_relation { 4 } else { 3 };
        if fields.len() != expected && !(with_relation && fields.len() == 3) {
            return Err(err(format!("expected {expected} fields, got {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty video path".into()));
        }
        let kin = match fields[2] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("label must be 0 or 1, got '{other}'"))),
        };
        let relation = fields.get(3).filter(|r| !r.is_empty()).map(|r| r.to_string());
        out.push(PairRecord {
            video_a: PathBuf::from(fields[0]),
            video_b: PathBuf::from(fields[1]),
            kin,
            relation,
        });
    }
    Ok(out)
}

/// Reads `video_a,video_b,label[,relation]` rows; labels are `1` (kin) or
/// `0` (non-kin).
pub fn load_pair_list(path: &Path) -> Result<Vec<PairRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pair_list(&text, &path.display().to_string())
}

pub fn pair_list_csv(pairs: &[PairRecord]) -> String {
    let with_relation = pairs.iter().any(|p| p.relation.is_some());
    let mut s = String::from(if with_relation {
        "video_a,video_b,label,relation\n"
    } else {
        "video_a,video_b,label\n"
    });
    for p in pairs {
        let _ = write!(s, "{},{},{}", p.video_a.display(), p.video_b.display(), u8::from(p.kin));
        if with_relation {
            let _ = write!(s, ",{}", p.relation.as_deref().unwrap_or(""));
        }
        s.push('\n');
    }
    s
}

pub fn write_pair_list(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    fs::write(path, pair_list_csv(pairs)).map_err(|e| Error::io(path, e))
}

/// Splits pairs so that no family appears on both sides.
///
/// Connected components of the graph whose nodes are families and whose
/// edges are pairs. Returns the component of every pair and the number of
/// families in every component; components are numbered by first
/// appearance.
pub fn family_groups<S: AsRef<str>>(pairs: &[(S, S)]) -> (Vec<usize>, Vec<usize>) {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ends = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let n = index.len();
        let ia = *index.entry(a.as_ref()).or_insert(n);
        let n = index.len();
        let ib = *index.entry(b.as_ref()).or_insert(n);
        ends.push((ia, ib));
    }
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &ends {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut group_of_pair = Vec::with_capacity(pairs.len());
    for &(a, _) in &ends {
        let r = find(&mut parent, a);
        let n = label.len();
        group_of_pair.push(*label.entry(r).or_insert(n));
    }
    let mut sizes = vec![0usize; label.len()];
    for f in 0..parent.len() {
        let r = find(&mut parent, f);
        sizes[label[&r]] += 1;
    }
    (group_of_pair, sizes)
}

/// Families linked by any pair form one indivisible group, so every input
/// pair lands in exactly one output. Groups are shuffled and assigned to the
/// test side while that keeps the test family count at or below
/// `round(test_fraction * families)`. Reshuffles (up to 64 derived seeds)
/// until both sides hold a kin and a non-kin pair.
pub fn partition_subject_disjoint(
    pairs: &[PairRecord],
    test_fraction: f64,
    seed: Seed,
) -> Result<(Vec<PairRecord>, Vec<PairRecord>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let families: Vec<(String, String)> = pairs
        .iter()
        .map(|p| Ok((p.family_a()?, p.family_b()?)))
        .collect::<Result<_>>()?;
    let (group_of_pair, sizes) = family_groups(&families);
    let n_fam: usize = sizes.iter().sum();
    let target = (test_fraction * n_fam as f64).round() as usize;
    let roots: Vec<(usize, usize)> = sizes.iter().copied().enumerate().collect();

    for attempt in 0..64u64 {
        let mut order = roots.clone();
        order.shuffle(&mut seed.derive(attempt).rng());
        let mut test_roots = Vec::new();
        let mut count = 0;
        for &(root, size) in &order {
            if count + size <= target {
                test_roots.push(root);
                count += size;
            }
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (p, g) in pairs.iter().zip(&group_of_pair) {
            if test_roots.contains(g) {
                test.push(p.clone());
            } else {
                train.push(p.clone());
            }
        }
        let both = |s: &[PairRecord]| s.iter().any(|p| p.kin) && s.iter().any(|p| !p.kin);
        if both(&train) && both(&test) {
            return Ok((train, test));
        }
    }
    Err(Error::InsufficientData(format!(
        "cannot split {} pairs over {n_fam} families so both sides hold kin and non-kin pairs",
        pairs.len()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(a: &str, b: &str, kin: bool) -> PairRecord {
        PairRecord {
            video_a: a.into(),
            video_b: b.into(),
            kin,
            relation: None,
        }
    }

    #[test]
    fn parse_two_rows() {
        let p = parse_pair_list("video_a,video_b,label\nf1/a,f1/b,1\nf1/a,f2/c,0\n", "t").unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].kin && !p[1].kin);
        assert!(p.iter().all(|r| r.relation.is_none()));
    }

    #[test]
    fn parse_relation_column() {
        let p = parse_pair_list(
            "video_a,video_b,label,relation\nf1/a,f1/b,1,F-S\nf1/a,f2/c,0,\n",
            "t",
        )
        .unwrap();
        assert_eq!(p[0].relation.as_deref(), Some("F-S"));
        assert_eq!(p[1].relation, None);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let e = parse_pair_list("video_a,video_b,label\nf1/a,f1/b,1\nf1/a,f1/b,2\n", "t").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_pair_list("video_a,video_b,label\nf1/a,1\n", "t").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(parse_pair_list("a,b,c\n", "t").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pairs = vec![rec("f1/a", "f1/b", true), rec("f1/a", "f2/c", false)];
        assert_eq!(parse_pair_list(&pair_list_csv(&pairs), "t").unwrap(), pairs);
    }

    fn ten_family_pairs() -> Vec<PairRecord> {
        let mut v = Vec::new();
        for blk in 0..5 {
            let (f, g) = (2 * blk, 2 * blk + 1);
            v.push(rec(&format!("fam{f}/s0"), &format!("fam{f}/s1"), true));
            v.push(rec(&format!("fam{g}/s0"), &format!("fam{g}/s1"), true));
            v.push(rec(&format!("fam{f}/s0"), &format!("fam{g}/s1"), false));
            v.push(rec(&format!("fam{f}/s1"), &format!("fam{g}/s0"), false));
        }
        v
    }

    fn families(s: &[PairRecord]) -> std::collections::BTreeSet<String> {
        s.iter().flat_map(|p| [p.family_a().unwrap(), p.family_b().unwrap()]).collect()
    }

    #[test]
    fn ten_families_split_six_four() {
        let pairs = ten_family_pairs();
        let (train, test) = partition_subject_disjoint(&pairs, 0.6, Seed(3)).unwrap();
        assert_eq!(families(&test).len(), 6);
        assert_eq!(families(&train).len(), 4);
        assert!(families(&train).is_disjoint(&families(&test)));
        let mut all: Vec<_> = train.iter().chain(&test).cloned().collect();
        let mut orig = pairs.clone();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(partition_subject_disjoint(&pairs, 0.6, Seed(3)).unwrap(), (train, test));
    }

    #[test]
    fn impossible_split_errors() {
        let pairs = vec![rec("f1/a", "f1/b", true), rec("f1/a", "f2/c", false)];
        assert!(partition_subject_disjoint(&pairs, 0.5, Seed(0)).is_err());
        assert!(partition_subject_disjoint(&pairs, 1.0, Seed(0)).is_err());
    }

    #[test]
    fn bad_path_shape() {
        assert!(family_of(Path::new("lonely")).is_err());
        assert_eq!(family_of(Path::new("root/fam/subj")).unwrap(), "fam");
    }
}
