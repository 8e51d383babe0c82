//! Dataset discovery in the `root/{rgb,depth,gt}/<id>.<ext>` layout and
//! seeded train/val/test assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IoContext, Result};

pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 600,
            val: 200,
            test: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleEntry {
    pub id: String,
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub gt: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted by id.
    pub samples: Vec<SampleEntry>,
}

impl DatasetIndex {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// One `id,split` line per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,split\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.id, s.split));
        }
        out
    }
}

/// Image files of one modality keyed by stem. A missing directory counts as
/// empty.
fn list_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        let Some(ext) = ext else { continue };
        if !IMAGE_EXTENSIONS.contains(&ext.as_str()) || !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_owned(), path.clone()) {
            return Err(Error::Invalid(format!(
                "{} and {} share the id {stem:?}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Finds every `(rgb, depth, gt)` triple under `root` and assigns splits.
///
/// Ids are shuffled with a ChaCha8 generator seeded by `spec.seed`; the first
/// `train` go to training, the next `val` to validation and the next `test`
/// to testing. Ids beyond `train + val + test` are left out of the index.
pub fn scan_dataset(root: &Path, spec: &SplitSpec) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let rgb = list_stems(&root.join("rgb"))?;
    let depth = list_stems(&root.join("depth"))?;
    let gt = list_stems(&root.join("gt"))?;
    let mut ids: Vec<&String> = rgb.keys().chain(depth.keys()).chain(gt.keys()).collect();
    ids.sort();
    ids.dedup();
    for id in &ids {
        if !(rgb.contains_key(*id) && depth.contains_key(*id) && gt.contains_key(*id)) {
            return Err(Error::MissingPair((*id).clone()));
        }
    }
    let wanted = spec.train + spec.val + spec.test;
    if !ids.is_empty() && wanted > ids.len() {
        return Err(Error::Invalid(format!(
            "split asks for {}/{}/{} samples but {} holds {}",
            spec.train,
            spec.val,
            spec.test,
            root.display(),
            ids.len()
        )));
    }
    if wanted < ids.len() {
        log::warn!("{} of {} samples are outside every split", ids.len() - wanted, ids.len());
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut tags: Vec<Option<Split>> = vec![None; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        tags[i] = if rank < spec.train {
            Some(Split::Train)
        } else if rank < spec.train + spec.val {
            Some(Split::Val)
        } else if rank < wanted {
            Some(Split::Test)
        } else {
            None
        };
    }
    let samples = ids
        .iter()
        .zip(tags)
        .filter_map(|(id, tag)| {
            tag.map(|split| SampleEntry {
                id: (*id).clone(),
                rgb: rgb[*id].clone(),
                depth: depth[*id].clone(),
                gt: gt[*id].clone(),
                split,
            })
        })
        .collect();
    Ok(DatasetIndex {
        root: root.to_owned(),
        samples,
    })
}
