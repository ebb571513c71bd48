//! Synthesized datasets on disk: a directory holding `manifest.json`,
//! `images.idx` and `labels.idx`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::colorize::CorpusSplit;
use super::idx;
use super::types::LabeledDataset;
use crate::error::{Result, ZddaError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub name: String,
    pub source_dataset: String,
    pub seed: u64,
    pub blend: String,
    pub background_corpus_hash: String,
    pub corpus_split: CorpusSplit,
    /// `"train"` or `"test"` half of the corpus.
    pub corpus_part: String,
    pub count: usize,
    pub class_count: usize,
}

const MANIFEST: &str = "manifest.json";
const IMAGES: &str = "images.idx";
const LABELS: &str = "labels.idx";

pub fn save_synthesized(dir: &Path, ds: &LabeledDataset, manifest: &SynthManifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ZddaError::io(dir, e))?;
    idx::write_images(&dir.join(IMAGES), ds.images())?;
    idx::write_labels(&dir.join(LABELS), ds.labels())?;
    let json = serde_json::to_string_pretty(manifest)?;
    // manifest last: its presence marks a complete directory
    std::fs::write(dir.join(MANIFEST), json).map_err(|e| ZddaError::io(dir.join(MANIFEST), e))
}

pub fn read_manifest(dir: &Path) -> Result<SynthManifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| ZddaError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_synthesized(dir: &Path) -> Result<(LabeledDataset, SynthManifest)> {
    let manifest = read_manifest(dir)?;
    let images = idx::read_images(&dir.join(IMAGES))?;
    let labels: Vec<usize> = idx::read_labels(&dir.join(LABELS))?
        .into_iter()
        .map(usize::from)
        .collect();
    if images.len() != manifest.count {
        return Err(ZddaError::Consistency(format!(
            "{}: manifest announces {} items, payload holds {}",
            dir.display(),
            manifest.count,
            images.len()
        )));
    }
    let ds = LabeledDataset::new(manifest.name.clone(), manifest.class_count, images, labels)?;
    Ok((ds, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::colorize::colorize_dataset;
    use crate::datasets::types::ImageTensor;

    #[test]
    fn synthesized_round_trip_is_exact() {
        let gray = LabeledDataset::new(
            "g",
            3,
            (0..5u8)
                .map(|i| ImageTensor::from_bytes(1, 2, 2, &[i, 40 * i, 255, 0]).unwrap())
                .collect(),
            vec![0, 1, 2, 0, 1],
        )
        .unwrap();
        let bg = ImageTensor::from_bytes(3, 3, 3, &(0..27u8).map(|b| b * 9).collect::<Vec<_>>())
            .unwrap();
        let colored = colorize_dataset(&gray, &[bg], 11).unwrap();
        let manifest = SynthManifest {
            name: colored.name().to_string(),
            source_dataset: "g".into(),
            seed: 11,
            blend: crate::datasets::colorize::BLEND_ABS_DIFF.into(),
            background_corpus_hash: "h".into(),
            corpus_split: CorpusSplit::Disjoint,
            corpus_part: "train".into(),
            count: colored.len(),
            class_count: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        save_synthesized(dir.path(), &colored, &manifest).unwrap();
        let (back, m) = load_synthesized(dir.path()).unwrap();
        assert_eq!(m, manifest);
        // byte-derived blends are multiples of 1/255 up to float rounding
        for (a, b) in back.images().iter().zip(colored.images()) {
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
        assert_eq!(back.labels(), colored.labels());
        save_synthesized(dir.path(), &back, &m).unwrap();
        assert_eq!(load_synthesized(dir.path()).unwrap().0, back);
    }
}
