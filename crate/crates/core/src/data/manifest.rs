//! On-disk dataset: one skeleton file per sample plus a tab-separated index
//! `sample-id  class-id  subject-id  camera-id`.

use std::fs;
use std::path::Path;

use super::{parse_skeleton_file, write_skeleton_file, SkeletonSequence};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "index.tsv";
const SAMPLE_EXT: &str = "skeleton";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub class: usize,
    pub subject: u32,
    pub camera: u32,
}

pub fn write_manifest(dir: &Path, samples: &[SkeletonSequence]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    for s in samples {
        fs::write(dir.join(format!("{}.{SAMPLE_EXT}", s.sample_id)), write_skeleton_file(s))?;
        index.push_str(&format!("{}\t{}\t{}\t{}\n", s.sample_id, s.label, s.subject, s.camera));
    }
    fs::write(dir.join(MANIFEST_FILE), index)?;
    Ok(())
}

pub fn read_index(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: format!("{MANIFEST_FILE}: {msg}"),
            };
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            Ok(ManifestEntry {
                sample_id: f[0].to_string(),
                class: f[1].parse().map_err(|_| bad("bad class id"))?,
                subject: f[2].parse().map_err(|_| bad("bad subject id"))?,
                camera: f[3].parse().map_err(|_| bad("bad camera id"))?,
            })
        })
        .collect()
}

/// Loads every sample listed in the index, in index order.
pub fn read_manifest(dir: &Path, joints: usize) -> Result<Vec<SkeletonSequence>> {
    read_index(dir)?
        .into_iter()
        .map(|e| {
            let path = dir.join(format!("{}.{SAMPLE_EXT}", e.sample_id));
            let text = fs::read_to_string(&path)?;
            let mut seq = parse_skeleton_file(&text, joints)
                .map_err(|err| Error::Data(format!("{}: {err}", path.display())))?;
            seq.label = e.class;
            seq.subject = e.subject;
            seq.camera = e.camera;
            seq.sample_id = e.sample_id;
            Ok(seq)
        })
        .collect()
}
