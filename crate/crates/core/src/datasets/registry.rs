//! Named datasets under a data root.
//!
//! ```text
//! <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
//! <root>/fashion/...                  same names
//! <root>/emnist/emnist-letters-{train,test}-{images-idx3,labels-idx1}-ubyte[.gz]
//! <root>/nist/{train,t10k}-...        letters only, pre-converted to IDX
//! <root>/backgrounds/*.png|jpg
//! ```
//!
//! Colored variants (`mnist-m`, ...) are synthesized on first use and cached
//! under `<cache>/synth/`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::colorize::{colorize_dataset, BackgroundCorpus, CorpusPart, CorpusSplit, BLEND_ABS_DIFF};
use super::idx::{load_idx_dataset, read_images, read_labels};
use super::store::{load_synthesized, save_synthesized, SynthManifest};
use super::types::{ImageTensor, LabeledDataset};
use crate::error::{Result, ZddaError};

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "ZDDA_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mnist,
    Fashion,
    Nist,
    Emnist,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mnist, Family::Fashion, Family::Nist, Family::Emnist];

    pub fn id(self) -> &'static str {
        match self {
            Family::Mnist => "mnist",
            Family::Fashion => "fashion",
            Family::Nist => "nist",
            Family::Emnist => "emnist",
        }
    }

    /// Words naming each class, used by the semantic-similarity diagnostic.
    pub fn class_names(self) -> Vec<String> {
        match self {
            Family::Mnist => [
                "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            Family::Fashion => [
                "t-shirt", "trouser", "pullover", "dress", "coat", "sandal", "shirt", "sneaker",
                "bag", "ankle boot",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            Family::Emnist => ('a'..='z').map(|c| c.to_string()).collect(),
            Family::Nist => ('A'..='Z')
                .chain('a'..='z')
                .map(|c| c.to_string())
                .collect(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A dataset family and modality, written `mnist` or `mnist-m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DatasetId {
    pub family: Family,
    pub colored: bool,
}

impl FromStr for DatasetId {
    type Err = ZddaError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, colored) = match lower.strip_suffix("-m") {
            Some(b) => (b.to_string(), true),
            None => (lower, false),
        };
        let family = Family::ALL
            .into_iter()
            .find(|f| f.id() == base)
            .ok_or_else(|| ZddaError::Configuration(format!("unknown dataset id {s:?}")))?;
        Ok(DatasetId { family, colored })
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.colored {
            write!(f, "{}-m", self.family)
        } else {
            write!(f, "{}", self.family)
        }
    }
}

impl Serialize for DatasetId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DatasetId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn part(self) -> CorpusPart {
        match self {
            Split::Train => CorpusPart::Train,
            Split::Test => CorpusPart::Test,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Resolves dataset ids to loaded datasets.
#[derive(Debug, Clone)]
pub struct DataRoot {
    pub root: PathBuf,
    pub cache: PathBuf,
    pub corpus_split: CorpusSplit,
}

impl DataRoot {
    pub fn new(root: impl Into<PathBuf>, cache: impl Into<PathBuf>, corpus_split: CorpusSplit) -> Self {
        Self {
            root: root.into(),
            cache: cache.into(),
            corpus_split,
        }
    }

    /// Root from the `ZDDA_DATA_ROOT` environment variable.
    pub fn from_env() -> Option<PathBuf> {
        std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
    }

    fn find(&self, family: Family, split: Split, kind: &str) -> Result<PathBuf> {
        let dir = self.root.join(family.id());
        let names: Vec<String> = match (family, split) {
            (Family::Emnist, Split::Train) => vec![format!("emnist-letters-train-{kind}-ubyte")],
            (Family::Emnist, Split::Test) => vec![format!("emnist-letters-test-{kind}-ubyte")],
            (_, Split::Train) => vec![format!("train-{kind}-ubyte")],
            (_, Split::Test) => vec![format!("t10k-{kind}-ubyte"), format!("test-{kind}-ubyte")],
        };
        for n in &names {
            for candidate in [dir.join(n), dir.join(format!("{n}.gz"))] {
                if candidate.is_file() {
                    return Ok(candidate);
                }
            }
        }
        Err(ZddaError::Resolution(format!(
            "no {kind} file for {family}/{} under {}",
            split.label(),
            dir.display()
        )))
    }

    /// Original gray dataset.
    pub fn gray(&self, family: Family, split: Split) -> Result<LabeledDataset> {
        let images = self.find(family, split, "images-idx3")?;
        let labels = self.find(family, split, "labels-idx1")?;
        let name = format!("{family}-{}", split.label());
        if family != Family::Emnist {
            let ds = load_idx_dataset(&images, &labels)?;
            let k = family.class_names().len();
            let (_, _, imgs, labs) = ds.into_parts();
            return LabeledDataset::new(name, k, imgs, labs);
        }
        // EMNIST stores images transposed and letters as labels 1..=26
        let imgs: Vec<ImageTensor> = read_images(&images)?
            .into_iter()
            .map(|im| transpose(&im))
            .collect::<Result<_>>()?;
        let labs = read_labels(&labels)?
            .into_iter()
            .map(|l| {
                usize::from(l).checked_sub(1).ok_or_else(|| {
                    ZddaError::format(&labels, "EMNIST letter labels start at 1")
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if imgs.len() != labs.len() {
            return Err(ZddaError::Consistency(format!(
                "{name}: {} images vs {} labels",
                imgs.len(),
                labs.len()
            )));
        }
        LabeledDataset::new(name, 26, imgs, labs)
    }

    pub fn backgrounds(&self) -> Result<BackgroundCorpus> {
        BackgroundCorpus::load(&self.root.join("backgrounds"))
    }

    /// Colorized counterpart of a gray dataset, synthesized once and cached.
    ///
    /// The returned dataset is always the one read back from the cache, so a
    /// cold and a warm call yield identical values.
    pub fn colored(
        &self,
        family: Family,
        split: Split,
        gray: &LabeledDataset,
        seed: u64,
    ) -> Result<(LabeledDataset, SynthManifest)> {
        let corpus = self.backgrounds()?;
        let tag = format!(
            "{family}-m-{}-{seed:016x}-{}-{}",
            split.label(),
            &corpus.hash[..12],
            match self.corpus_split {
                CorpusSplit::Disjoint => "disjoint",
                CorpusSplit::Shared => "shared",
            }
        );
        let dir = self.cache.join("synth").join(tag);
        if !dir.join("manifest.json").is_file() {
            let backgrounds = corpus.part(self.corpus_split, split.part());
            let colored = colorize_dataset(gray, &backgrounds, seed)?
                .renamed(format!("{family}-m-{}", split.label()));
            let manifest = SynthManifest {
                name: colored.name().to_string(),
                source_dataset: gray.name().to_string(),
                seed,
                blend: BLEND_ABS_DIFF.to_string(),
                background_corpus_hash: corpus.hash.clone(),
                corpus_split: self.corpus_split,
                corpus_part: split.label().to_string(),
                count: colored.len(),
                class_count: colored.class_count(),
            };
            save_synthesized(&dir, &colored, &manifest)?;
        }
        let (ds, manifest) = load_synthesized(&dir)?;
        if ds.len() != gray.len() || ds.labels() != gray.labels() {
            return Err(ZddaError::Consistency(format!(
                "cached {} does not match {}",
                dir.display(),
                gray.name()
            )));
        }
        Ok((ds, manifest))
    }
}

fn transpose(im: &ImageTensor) -> Result<ImageTensor> {
    let (c, h, w) = im.shape();
    let src = im.data();
    let mut out = vec![0f32; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * w + x) * h + y] = src[(ch * h + y) * w + x];
            }
        }
    }
    ImageTensor::new(c, w, h, out)
}
